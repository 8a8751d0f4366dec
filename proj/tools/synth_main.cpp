// mixteach-synth: writes a synthetic dataset with scripted ensemble
// predictions and a ready-to-run pipeline.ini.

#include <CLI11.hpp>

#include <iostream>

#include "mixteach/errors.hpp"
#include "synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"mixteach-synth: synthetic KITTI-style dataset generator"};
  mixteach::synth::SceneConfig cfg;
  std::string out;
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--labeled", cfg.n_labeled, "labeled frames");
  app.add_option("--unlabeled", cfg.n_unlabeled, "unlabeled frames");
  app.add_option("--models", cfg.n_models, "ensemble size")->check(CLI::PositiveNumber);
  app.add_option("--width", cfg.image_width, "image width")->check(CLI::Range(64, 4096));
  app.add_option("--height", cfg.image_height, "image height")->check(CLI::Range(32, 4096));
  app.add_option("--empty-fraction", cfg.empty_fraction, "share of unlabeled frames without objects")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--seed", cfg.seed, "generator seed");
  CLI11_PARSE(app, argc, argv);
  try {
    const auto scene = mixteach::synth::GenerateScene(cfg);
    mixteach::synth::WriteScene(scene, out);
    std::cout << "frames " << scene.frames.size() << "\nconfig " << (std::filesystem::path(out) / "pipeline.ini").string()
              << "\n";
  } catch (const mixteach::Error& e) {
    std::cerr << "error: " << mixteach::ErrorCodeName(e.code()) << ": " << e.what() << "\n";
    return mixteach::ExitStatusFor(e.code());
  }
  return 0;
}
