#include "kbrd/synthetic.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "kbrd/corpus.hpp"
#include "kbrd/rng.hpp"

namespace kbrd {

namespace {

std::string fill(std::string tmpl, const std::string& key, const std::string& value) {
  for (auto pos = tmpl.find(key); pos != std::string::npos; pos = tmpl.find(key, pos + value.size()))
    tmpl.replace(pos, key.size(), value);
  return tmpl;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

KnowledgeGraph SyntheticWorld::graph(GraphOptions opts) const { return KnowledgeGraph::build(triples, items, opts); }

AliasLexicon SyntheticWorld::lexicon(const KnowledgeGraph& g) const {
  AliasLexicon lex;
  for (const auto& [alias, name] : aliases)
    if (auto id = g.find_entity(name)) lex.add(alias, *id);
  for (EntityId v = 0; v < g.num_entities(); ++v) lex.add(g.entity_name(v), v);
  return lex;
}

SyntheticWorld overfit_world() {
  const std::vector<std::string> genres{"comedy", "horror", "drama", "western"};
  const std::vector<std::string> actors{"Ava Stone", "Max Ford", "Lily Chen", "Omar Reyes"};
  const std::vector<std::string> directors{"Jon Park", "Eva Lind", "Sam Cole", "Kim Ortiz"};
  const std::vector<std::string> countries{"Norland", "Sudmark"};
  const std::vector<std::string> movies{"Red Harbor",   "Silent Creek", "Glass Moon",    "Iron Valley",
                                        "Glass Garden", "Night Ferry",  "Copper Sky",    "Hollow Pines",
                                        "Lost Compass", "Velvet Storm", "Amber Lantern", "Frozen Orchard",
                                        "Golden Dunes", "Quiet Thunder", "Wild Meadow",  "Salt River"};
  SyntheticWorld w;
  for (std::size_t g = 0; g < genres.size(); ++g)
    for (std::size_t a = 0; a < actors.size(); ++a) {
      const std::string& m = movies[g * actors.size() + a];
      w.items.push_back(m);
      w.triples.push_back({m, "genre", genres[g]});
      w.triples.push_back({m, "starring", actors[a]});
      w.triples.push_back({m, "directed_by", directors[(g + a) % directors.size()]});
    }
  for (std::size_t i = 0; i < directors.size(); ++i) w.triples.push_back({directors[i], "from_country", countries[i % 2]});
  for (std::size_t i = 0; i < actors.size(); ++i) w.triples.push_back({actors[i], "from_country", countries[(i + 1) % 2]});
  w.aliases = {{"comedies", "comedy"}, {"westerns", "western"}, {"horror films", "horror"}};

  const std::vector<std::vector<std::string>> user1{{"hi ! i am in the mood for a {genre} movie ."},
                                                    {"hello , can you suggest a {genre} film ?"},
                                                    {"hey there , i want to watch some {genre} tonight ."}};
  const std::vector<std::string> rec1{"sure ! who is your favorite actor ?", "of course . any actor you like ?",
                                      "great choice . which actor do you enjoy ?"};
  const std::vector<std::string> user2{"i really like {actor} .", "{actor} is my favorite .",
                                       "anything with {actor} would be nice ."};
  const std::vector<std::string> rec2{"then you should watch {movie} .", "you would love {movie} !",
                                      "i recommend {movie} , it is a classic ."};
  const std::vector<std::string> user3{"thanks , i will check it out .", "sounds good , thank you !",
                                       "perfect , i have not seen that one ."};
  const std::vector<std::string> rec3{"enjoy the movie , bye !", "you are welcome , have fun !", "i hope you like it !"};

  auto make = [&](std::size_t g, std::size_t a, std::size_t t, std::size_t n) {
    const std::string& m = movies[g * actors.size() + a];
    Dialogue d;
    d.conversation_id = "overfit-" + std::to_string(n);
    d.turns.push_back({Speaker::user, fill(user1[t][0], "{genre}", genres[g]), {}});
    d.turns.push_back({Speaker::recommender, rec1[t], {}});
    d.turns.push_back({Speaker::user, fill(user2[t], "{actor}", lower(actors[a])), {}});
    d.turns.push_back({Speaker::recommender, fill(rec2[t], "{movie}", lower(m)), {m}});
    d.turns.push_back({Speaker::user, user3[t], {}});
    d.turns.push_back({Speaker::recommender, rec3[t], {}});
    return d;
  };
  std::size_t n = 0;
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t g = 0; g < genres.size(); ++g)
      for (std::size_t a = 0; a < actors.size(); ++a) w.train.push_back(make(g, a, t, n++));
  w.train.push_back(make(0, 1, 1, n++));
  w.train.push_back(make(3, 2, 2, n++));
  return w;
}

SyntheticWorld ablation_world(std::uint64_t seed, const AblationWorldOptions& opts) {
  static const std::vector<std::string> genre_names{"action",  "comedy",   "drama",   "horror",  "western",
                                                    "romance", "thriller", "musical", "fantasy", "mystery",
                                                    "crime",   "war",      "animation", "documentary", "adventure",
                                                    "noir",    "satire",   "sports",  "family",  "biography"};
  if (opts.genres > genre_names.size()) throw ConfigError("ablation world supports at most 20 genres");
  if (opts.items_per_genre < opts.max_liked + 2) throw ConfigError("too few items per genre");
  Rng rng(seed);
  SyntheticWorld w;
  std::vector<std::vector<std::string>> genre_items(opts.genres);
  std::size_t actor_id = 0;
  for (std::size_t g = 0; g < opts.genres; ++g) {
    std::vector<std::string> cast;
    for (std::size_t a = 0; a < opts.actors_per_genre; ++a) cast.push_back("Actor " + std::to_string(actor_id++));
    for (std::size_t i = 0; i < opts.items_per_genre; ++i) {
      const std::string m = "Movie " + std::to_string(w.items.size());
      w.items.push_back(m);
      genre_items[g].push_back(m);
      w.triples.push_back({m, "genre", genre_names[g]});
      const std::size_t a1 = rng.index(cast.size());
      std::size_t a2 = rng.index(cast.size() - 1);
      if (a2 >= a1) ++a2;
      w.triples.push_back({m, "starring", cast[a1]});
      w.triples.push_back({m, "starring", cast[a2]});
    }
  }

  const std::vector<std::string> asks{"i am looking for a {genre} movie .", "any good {genre} films ?",
                                      "i feel like watching {genre} tonight ."};
  const std::vector<std::string> answers{"you should try {movie} .", "how about {movie} ?", "i suggest {movie} ."};
  auto make = [&](std::size_t n, const char* prefix) {
    const std::size_t g = rng.index(opts.genres);
    std::vector<std::string> pool = genre_items[g];
    rng.shuffle(pool);
    const std::size_t liked = rng.index(opts.max_liked + 1);
    Dialogue d;
    d.conversation_id = std::string(prefix) + std::to_string(n);
    Turn u{Speaker::user, fill(asks[rng.index(asks.size())], "{genre}", genre_names[g]), {}};
    if (liked) {
      u.text += " i liked " + lower(pool[0]);
      u.items.push_back(pool[0]);
      for (std::size_t i = 1; i < liked; ++i) {
        u.text += " and " + lower(pool[i]);
        u.items.push_back(pool[i]);
      }
      u.text += " .";
    }
    d.turns.push_back(std::move(u));
    const std::string& gold = pool[liked];
    d.turns.push_back({Speaker::recommender, fill(answers[rng.index(answers.size())], "{movie}", lower(gold)), {gold}});
    return d;
  };
  for (std::size_t i = 0; i < opts.train_dialogues; ++i) w.train.push_back(make(i, "train-"));
  for (std::size_t i = 0; i < opts.test_dialogues; ++i) w.test.push_back(make(i, "test-"));
  return w;
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::items_only: return "items-only";
    case Variant::dialog_only: return "dialog-only";
    case Variant::kg_only: return "kg-only";
    case Variant::full: return "full";
  }
  return "?";
}

ModelConfig apply_variant(ModelConfig cfg, Variant v) {
  cfg.use_dialog_entities = v == Variant::dialog_only || v == Variant::full;
  cfg.use_kg = v == Variant::kg_only || v == Variant::full;
  return cfg;
}

TrainConfig overfit_train_config() {
  TrainConfig c;
  c.seed = 7;
  c.epochs = 120;
  c.batch_size = 8;
  c.model.entity_dim = 32;
  c.model.transformer.model_dim = 32;
  c.model.transformer.num_heads = 2;
  c.model.transformer.num_layers = 1;
  c.model.transformer.ffn_dim = 64;
  c.model.transformer.max_seq_len = 64;
  c.model.transformer.dropout = 0.0;
  c.model.max_response_len = 16;
  return c;
}

TrainConfig ablation_train_config() {
  TrainConfig c;
  c.seed = 1;
  c.epochs = 30;
  c.batch_size = 16;
  c.train_dialog = false;
  c.model.entity_dim = 32;
  c.model.transformer.model_dim = 8;
  c.model.transformer.num_heads = 1;
  c.model.transformer.num_layers = 1;
  c.model.transformer.ffn_dim = 8;
  c.model.transformer.dropout = 0.0;
  return c;
}

void write_world(const std::string& dir, const SyntheticWorld& world) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream out(std::filesystem::path(dir) / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + dir + "/" + name);
    return out;
  };
  {
    auto out = open("kg.tsv");
    for (const auto& t : world.triples) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
  }
  {
    auto out = open("items.txt");
    for (const auto& i : world.items) out << i << '\n';
  }
  {
    auto out = open("aliases.tsv");
    for (const auto& [alias, name] : world.aliases) out << alias << '\t' << name << '\n';
  }
  write_corpus((std::filesystem::path(dir) / "train.jsonl").string(), world.train);
  write_corpus((std::filesystem::path(dir) / "test.jsonl").string(), world.test);
}

}  // namespace kbrd
