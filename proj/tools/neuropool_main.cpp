// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

int main() {
  std::cout << "neuropool\n";
  return 0;
}
