#include <iostream>

int main() {
  std::cout << "msdp\n";
  return 0;
}
