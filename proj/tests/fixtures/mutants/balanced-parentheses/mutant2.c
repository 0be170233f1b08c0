#include <stdbool.h>

struct Stack {
    char items[100];
    int top;
};

void push(struct Stack *stack, char c) {
    if (stack->top < 100) {
        stack->items[stack->top++] = c;
    }
}

char pop(struct Stack *stack) {
    if (stack->top == 0) return '\0';
    return stack->items[stack->top - 1];
}

bool is_empty(const struct Stack *stack) {
    return stack->top == 0;
}

bool is_balanced(const char *expr) {
    struct Stack stack;
    stack.top = 0;
    for (; *expr; expr++) {
        if (*expr == '(') {
            push(&stack, '(');
        } else if (*expr == ')') {
            if (is_empty(&stack)) return false;
            pop(&stack);
        }
    }
    return is_empty(&stack);
}
