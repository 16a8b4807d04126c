// kbrd: train, evaluate, query and serve a knowledge-grounded conversational
// recommender.
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kbrd/checkpoint.hpp"
#include "kbrd/corpus.hpp"
#include "kbrd/kg.hpp"
#include "kbrd/metrics.hpp"
#include "kbrd/model.hpp"
#include "kbrd/service.hpp"
#include "kbrd/train.hpp"

namespace {

using nlohmann::json;
using namespace kbrd;

struct MissingFile : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw MissingFile(std::string("--") + what + " is required");
  if (!std::filesystem::is_regular_file(path)) throw MissingFile(std::string(what) + " file not found: " + path);
}

struct GraphArgs {
  std::string kg, items, aliases;
};

struct LoadedGraph {
  KnowledgeGraph graph;
  AliasLexicon lexicon;
};

LoadedGraph load_graph_args(const GraphArgs& a, bool inverse) {
  require_file(a.kg, "kg");
  require_file(a.items, "items");
  auto g = load_graph(a.kg, a.items, {.add_inverse_relations = inverse});
  for (const auto& r : g.rejected_items) std::cerr << "warning: item not in graph: " << r << '\n';
  LoadedGraph out{std::move(g.graph), {}};
  if (!a.aliases.empty()) {
    require_file(a.aliases, "aliases");
    auto lex = load_lexicon(a.aliases, out.graph);
    for (const auto& r : lex.rejected) std::cerr << "warning: alias rejected: " << r << '\n';
    out.lexicon = std::move(lex.lexicon);
  } else {
    out.lexicon = AliasLexicon::from_entity_names(out.graph);
  }
  return out;
}

std::vector<Dialogue> load_corpus_arg(const std::string& path) {
  require_file(path, "corpus");
  auto c = load_corpus(path);
  for (const auto& r : c.rejected) std::cerr << "warning: " << path << ":" << r.line << ": " << r.reason << '\n';
  return std::move(c.dialogues);
}

LoadedCheckpoint load_checkpoint_arg(const std::string& path) {
  require_file(path, "checkpoint");
  return load_checkpoint(path);
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::vector<Turn> load_history(const std::string& path) {
  require_file(path, "history");
  std::ifstream in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  const json& turns = j.is_object() ? j.at("turns") : j;
  if (!turns.is_array()) throw ConfigError(path + ": expected an array of turns");
  std::vector<Turn> out;
  for (const auto& t : turns) {
    auto sp = parse_speaker(t.at("speaker").get<std::string>());
    if (!sp) throw ConfigError(path + ": unknown speaker '" + t.at("speaker").get<std::string>() + "'");
    Turn turn{*sp, t.at("text").get<std::string>(), {}};
    if (t.contains("items")) turn.items = t.at("items").get<std::vector<std::string>>();
    out.push_back(std::move(turn));
  }
  return out;
}

HttpServer* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-grounded conversational recommender"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, corpus, history, entity, host = "127.0.0.1", transcripts;
  std::vector<std::string> eval_checkpoints;
  GraphArgs graph_args;
  int port = 8080;
  std::size_t k = 10, bias_k = 8, beam = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  bool table = false, no_generate = false;

  auto add_graph = [&](CLI::App* cmd) {
    cmd->add_option("--kg", graph_args.kg, "Triples TSV: head<TAB>relation<TAB>tail");
    cmd->add_option("--items", graph_args.items, "Item entity names, one per line");
    cmd->add_option("--aliases", graph_args.aliases, "Alias lexicon TSV: alias<TAB>entity");
  };

  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  train_cmd->add_option("--config", config_path, "JSON training config");
  add_graph(train_cmd);
  train_cmd->add_option("--corpus", corpus, "Training dialogues (JSONL)");
  train_cmd->add_option("--checkpoint", checkpoint, "Output checkpoint path")->required();
  train_cmd->add_option("--seed", seed, "Random seed (overrides config)");
  train_cmd->add_option("--epochs", epochs, "Epoch count (overrides config)");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate checkpoints on a corpus");
  eval_cmd->add_option("--checkpoint", eval_checkpoints, "Checkpoint(s); several give mean and std")->required();
  eval_cmd->add_option("--corpus", corpus, "Evaluation dialogues (JSONL)");
  eval_cmd->add_flag("--table", table, "Print a text table instead of JSON");
  eval_cmd->add_flag("--no-generate", no_generate, "Skip response generation (no distinct-n)");

  auto* rec_cmd = app.add_subcommand("recommend", "Rank items for a dialog history");
  rec_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint");
  rec_cmd->add_option("--history", history, "JSON array of turns");
  rec_cmd->add_option("--k", k, "Number of items");

  auto* bias_cmd = app.add_subcommand("bias", "Top vocabulary-bias words for an entity");
  bias_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint");
  bias_cmd->add_option("--entity", entity, "Entity name")->required();
  bias_cmd->add_option("--k", bias_k, "Number of words");

  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP chat service");
  serve_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint");
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--port", port, "Port (0 picks a free one)");
  serve_cmd->add_option("--k", k, "Recommendations per reply");
  serve_cmd->add_option("--beam", beam, "Beam width (1 is greedy)");
  serve_cmd->add_option("--transcripts", transcripts, "Append session turns to this JSONL file");

  auto* stats_cmd = app.add_subcommand("stats", "Corpus and graph statistics");
  add_graph(stats_cmd);
  stats_cmd->add_option("--corpus", corpus, "Dialogues (JSONL)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train_cmd) {
      TrainConfig cfg;
      if (!config_path.empty()) {
        require_file(config_path, "config");
        cfg = load_train_config(config_path);
      }
      if (seed) cfg.seed = *seed;
      if (epochs) cfg.epochs = *epochs;
      cfg.checkpoint_path = checkpoint;
      cfg.validate();
      auto g = load_graph_args(graph_args, cfg.model.add_inverse_relations);
      const auto dialogues = load_corpus_arg(corpus);
      KbrdModel model = make_model(cfg.model, std::move(g.graph), std::move(g.lexicon), dialogues,
                                   cfg.min_word_count, cfg.seed);
      const auto examples = build_examples(dialogues, model.symbols(), model.lexicon(), model.example_options());
      std::cerr << "training on " << examples.size() << " examples, vocabulary " << model.symbols().num_words()
                << ", items " << model.symbols().num_items() << '\n';
      if (cfg.epochs == 0) save_checkpoint(checkpoint, model);
      train(model, examples, cfg, [](const EpochLog& log) {
        std::cout << json{{"epoch", log.epoch},
                          {"loss", log.mean_loss},
                          {"dialog_nll", log.mean_dialog_nll},
                          {"rec_loss", log.mean_rec_loss},
                          {"grad_norm", log.mean_grad_norm}}
                         .dump()
                  << std::endl;
      });
      return 0;
    }
    if (*eval_cmd) {
      const auto dialogues = load_corpus_arg(corpus);
      std::vector<EvalReport> reports;
      for (const auto& path : eval_checkpoints) {
        auto ck = load_checkpoint_arg(path);
        const auto examples =
            build_examples(dialogues, ck.model.symbols(), ck.model.lexicon(), ck.model.example_options());
        reports.push_back(evaluate(ck.model, examples, {.generate_responses = !no_generate}));
      }
      if (table) {
        for (std::size_t i = 0; i < reports.size(); ++i)
          std::cout << "== " << eval_checkpoints[i] << '\n' << format_report(reports[i]);
        if (reports.size() > 1) std::cout << summarize_runs(reports).dump(2) << '\n';
      } else if (reports.size() == 1) {
        std::cout << to_json(reports.front()).dump(2) << '\n';
      } else {
        json runs = json::array();
        for (const auto& r : reports) runs.push_back(to_json(r));
        std::cout << json{{"runs", runs}, {"summary", summarize_runs(reports)}}.dump(2) << '\n';
      }
      return 0;
    }
    if (*rec_cmd) {
      auto ck = load_checkpoint_arg(checkpoint);
      const auto turns = load_history(history);
      const auto rec = ck.model.recommend(ck.model.context_for(turns));
      json out = json::array();
      for (std::size_t i = 0; i < std::min(k, rec.ranked_items.size()); ++i)
        out.push_back({{"entity", ck.model.graph().entity_name(rec.ranked_items[i].entity)},
                       {"prob", rec.ranked_items[i].prob}});
      std::cout << out.dump(2) << '\n';
      return 0;
    }
    if (*bias_cmd) {
      auto ck = load_checkpoint_arg(checkpoint);
      json out = json::array();
      for (const auto& w : top_bias_words_for_entity(ck.model, entity, bias_k))
        out.push_back({{"word", w.word}, {"bias", w.bias}});
      std::cout << out.dump(2) << '\n';
      return 0;
    }
    if (*serve_cmd) {
      auto ck = load_checkpoint_arg(checkpoint);
      ServiceOptions opts;
      opts.top_k = k;
      opts.generation = {.max_len = ck.model.config().max_response_len, .beam = beam};
      opts.model_version = hex(ck.checksum);
      opts.transcript_path = transcripts;
      ChatService service(std::make_shared<const KbrdModel>(std::move(ck.model)), opts);
      HttpServer server(service);
      const int bound = server.bind(host, port);
      if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on http://" << host << ":" << bound << " (model " << opts.model_version << ")"
                << std::endl;
      server.listen_after_bind();
      g_server = nullptr;
      return 0;
    }
    if (*stats_cmd) {
      json out;
      if (!graph_args.kg.empty() || !graph_args.items.empty()) {
        auto g = load_graph_args(graph_args, true);
        std::size_t non_items = g.graph.num_entities() - g.graph.items().size();
        out["graph"] = {{"entities", g.graph.num_entities()},
                        {"relations", g.graph.num_relations()},
                        {"triples", g.graph.triples().size()},
                        {"items", g.graph.items().size()},
                        {"non_item_entities", non_items},
                        {"aliases", g.lexicon.size()}};
      }
      if (!corpus.empty()) {
        require_file(corpus, "corpus");
        auto c = load_corpus(corpus);
        out["corpus"] = {{"dialogues", c.stats.dialogues},
                         {"utterances", c.stats.utterances},
                         {"item_mentions", c.stats.item_mentions},
                         {"rejected_lines", c.rejected.size()}};
      }
      if (out.is_null()) {
        std::cerr << "stats needs --kg/--items and/or --corpus\n";
        return 2;
      }
      std::cout << out.dump(2) << '\n';
      return 0;
    }
  } catch (const MissingFile& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
