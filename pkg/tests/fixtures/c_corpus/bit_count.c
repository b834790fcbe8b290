int bit_count(unsigned int x) {
    int k = 0;
    while (x != 0) {
        k += (int)(x & 1u);
        x >>= 1;
    }
    return k;
}
