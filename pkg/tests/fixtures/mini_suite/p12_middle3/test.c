int middle3(int a, int b, int c);

int main(void) {
    if (middle3(1, 2, 3) != 2) return 1;
    if (middle3(3, 2, 1) != 2) return 2;
    if (middle3(2, 1, 3) != 2) return 3;
    if (middle3(5, 5, 5) != 5) return 4;
    if (middle3(-1, -5, -3) != -3) return 5;
    return 0;
}
