int gcd(int a, int b);

int main(void) {
    if (gcd(12, 18) != 6) return 1;
    if (gcd(7, 13) != 1) return 2;
    if (gcd(64, 48) != 16) return 3;
    return 0;
}
