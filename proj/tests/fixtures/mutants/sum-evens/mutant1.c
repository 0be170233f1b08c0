int sum_evens(const int arr[], int n) {
    int sum = 0;
    for (int i = 0; i < n; i++) {
        if (arr[i] % 2 != 0) sum += arr[i];
    }
    return sum;
}
