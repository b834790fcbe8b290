int poly(int x) { return 3 * x * x + 2 * x + 1; }
