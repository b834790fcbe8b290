int is_palindrome(const int *a, int n);

int main(void) {
    int p[5];
    int q[4];
    p[0] = 1; p[1] = 2; p[2] = 3; p[3] = 2; p[4] = 1;
    q[0] = 1; q[1] = 2; q[2] = 2; q[3] = 3;
    if (is_palindrome(p, 5) != 1) return 1;
    if (is_palindrome(q, 4) != 0) return 2;
    if (is_palindrome(p, 0) != 1) return 3;
    if (is_palindrome(p, 1) != 1) return 4;
    return 0;
}
