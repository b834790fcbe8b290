int shl_add(int x, int k) { return (x << k) + x; }

int asr_div4(int x) { return x >> 2; }
