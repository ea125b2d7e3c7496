#include <cstdio>
int main() {
    int x = 3;
    printf("%d\n", x);
    return 0;
}
// pad
// pad
// pad
// pad
// pad
// pad
// pad
// pad
// pad
