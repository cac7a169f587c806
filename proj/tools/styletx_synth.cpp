#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "styletx/report.hpp"
#include "styletx/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a synthetic JSON-lines review corpus"};
  std::size_t count = 1000;
  std::uint64_t seed = 2;
  std::size_t neutral_every = 0;
  std::string out;
  app.add_option("--count", count, "Number of reviews");
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--neutral-every", neutral_every, "Make every n-th review 3 stars (0 = never)");
  app.add_option("--out", out, "Output file (default: stdout)");
  CLI11_PARSE(app, argc, argv);
  const std::string text = styletx::synthetic::review_jsonl(count, seed, neutral_every);
  try {
    if (out.empty()) {
      std::cout << text;
    } else {
      styletx::write_text(out, text);
    }
  } catch (const std::exception& e) {
    std::cerr << "styletx-synth: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
