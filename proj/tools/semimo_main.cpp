// SPDX-License-Identifier: Apache-2.0
//
// semimo command-line entry point. Subcommands: gen-data, train, eval,
// sweep, plot. See README.md for usage.

#include <cstdio>

int main(int argc, char** argv) {
  (void)argc;
  (void)argv;
  std::puts("semimo: CLI under construction");
  return 0;
}
