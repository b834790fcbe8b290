int fib(int n);

int main(void) {
    if (fib(0) != 0) return 1;
    if (fib(10) != 55) return 2;
    if (fib(15) != 610) return 3;
    return 0;
}
