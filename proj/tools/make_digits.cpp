// Writes the synthetic digit set as IDX files (and optionally CSV).

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "bfa/dataset.hpp"
#include "bfa/synthetic_digits.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Render synthetic 28x28 digits"};
  std::size_t count = 1000;
  std::uint64_t seed = 0;
  std::string prefix;
  bool csv = false;
  app.add_option("--count", count, "number of images")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "render seed")->capture_default_str();
  app.add_flag("--csv", csv, "write <prefix>.csv instead of IDX files");
  app.add_option("prefix", prefix, "output prefix; IDX writes <prefix>-images.idx and <prefix>-labels.idx")
      ->required();
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const bfa::DigitImages d = bfa::render_digits(count, seed);
    if (csv) {
      std::ofstream out(prefix + ".csv");
      if (!out) throw std::runtime_error("cannot write " + prefix + ".csv");
      out << "label";
      for (int p = 0; p < 784; ++p) out << ",p" << p;
      out << '\n';
      for (std::size_t i = 0; i < count; ++i) {
        out << int{d.labels[i]};
        for (std::size_t p = 0; p < 784; ++p) out << ',' << int{d.pixels[i * 784 + p]};
        out << '\n';
      }
    } else {
      bfa::write_idx(prefix + "-images.idx", d.pixels, {count, 28, 28});
      bfa::write_idx(prefix + "-labels.idx", d.labels, {count});
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
