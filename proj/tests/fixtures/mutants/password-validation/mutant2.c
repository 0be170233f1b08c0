#include <ctype.h>
#include <stdbool.h>
#include <string.h>

bool has_digit(const char *s) {
    for (; *s; s++) {
        if (isdigit((unsigned char)*s)) return true;
    }
    return false;
}

bool has_upper(const char *s) {
    for (; *s; s++) {
        if (isalpha((unsigned char)*s)) return true;
    }
    return false;
}

bool has_lower(const char *s) {
    for (; *s; s++) {
        if (islower((unsigned char)*s)) return true;
    }
    return false;
}

bool is_valid_password(const char *s) {
    return strlen(s) >= 8 && has_digit(s) && has_upper(s) && has_lower(s);
}
