int sumsq(int a, int b);

int main(void) {
    if (sumsq(3, 4) != 25) return 1;
    if (sumsq(0, 0) != 0) return 2;
    if (sumsq(-2, 2) != 8) return 3;
    return 0;
}
