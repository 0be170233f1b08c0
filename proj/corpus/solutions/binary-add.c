void add_binary(const int a[], const int b[], int n, int result[]) {
    int carry = 0;
    for (int i = n - 1; i >= 0; i--) {
        int s = a[i] + b[i] + carry;
        result[i + 1] = s % 2;
        carry = s / 2;
    }
    result[0] = carry;
}
