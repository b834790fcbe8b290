int add2(int a, int b);

int main(void) {
    if (add2(2, 3) != 5) return 1;
    if (add2(-7, 7) != 0) return 2;
    if (add2(-4, -6) != -10) return 3;
    return 0;
}
