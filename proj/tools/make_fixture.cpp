// Writes a generated demo world (graph, items, aliases, train/test dialogues)
// and a matching training config.
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "kbrd/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic recommendation world"};
  std::string out_dir, world = "overfit";
  std::uint64_t seed = 1;
  app.add_option("--out", out_dir, "Output directory")->required();
  app.add_option("--world", world, "overfit or ablation")->check(CLI::IsMember({"overfit", "ablation"}));
  app.add_option("--seed", seed, "Seed for the ablation world");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    const bool overfit = world == "overfit";
    const kbrd::SyntheticWorld w = overfit ? kbrd::overfit_world() : kbrd::ablation_world(seed);
    kbrd::write_world(out_dir, w);
    const kbrd::TrainConfig cfg = overfit ? kbrd::overfit_train_config() : kbrd::ablation_train_config();
    std::ofstream(std::filesystem::path(out_dir) / "config.json") << kbrd::to_json(cfg).dump(2) << '\n';
    std::cout << "wrote " << w.triples.size() << " triples, " << w.items.size() << " items, " << w.train.size()
              << " train and " << w.test.size() << " test dialogues to " << out_dir << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
