// Regenerates the committed golden files: kdmd_golden_gen <dir>
#include <iostream>

#include "kdmd/io.hpp"
#include "support/fixtures.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: kdmd_golden_gen <dir>\n";
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);
  kdmd::save_model(dir / "model.kdmd", kdmd::testing::golden_model());
  kdmd::save_dataset(dir / "dataset", kdmd::testing::golden_dataset());
  return 0;
}
