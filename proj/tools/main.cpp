#include <cstdio>

int main() {
    std::puts("shlight CLI placeholder");
    return 0;
}
