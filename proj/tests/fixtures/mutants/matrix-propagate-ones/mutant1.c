void propagate_ones(int matrix[], int rows, int cols) {
    int row_has[64] = {0};
    int col_has[64] = {0};
    for (int r = 0; r < rows; r++) {
        for (int c = 0; c < cols; c++) {
            if (matrix[r * cols + c] == 1) {
                row_has[r] = 1;
                col_has[c] = 1;
            }
        }
    }
    for (int r = 0; r < rows; r++) {
        for (int c = 0; c < cols; c++) {
            if (row_has[r] && col_has[c]) matrix[r * cols + c] = 1;
        }
    }
}
