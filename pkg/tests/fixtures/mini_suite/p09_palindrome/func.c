int is_palindrome(const int *a, int n) {
    int i = 0, j = n - 1;
    while (i < j) {
        if (a[i] != a[j])
            return 0;
        i++;
        j--;
    }
    return 1;
}
