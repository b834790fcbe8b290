int fib(int n);

int main(void) {
    if (fib(0) != 0) return 1;
    if (fib(1) != 1) return 2;
    if (fib(10) != 55) return 3;
    if (fib(20) != 6765) return 4;
    return 0;
}
