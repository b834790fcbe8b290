int sum_upto(int n);

int main(void) {
    if (sum_upto(0) != 0) return 1;
    if (sum_upto(1) != 1) return 2;
    if (sum_upto(10) != 55) return 3;
    if (sum_upto(100) != 5050) return 4;
    return 0;
}
