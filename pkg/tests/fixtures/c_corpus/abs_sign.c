int absval(int x) {
    if (x < 0)
        return -x;
    return x;
}

int sign(int x) {
    if (x > 0)
        return 1;
    if (x < 0)
        return -1;
    return 0;
}
