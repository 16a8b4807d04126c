// Chat sessions over a loaded model and their HTTP/JSON front end.
//
//   POST /sessions                  -> 201 {"session_id"}
//   POST /sessions/{id}/messages    {"text"} -> 200 {"reply", "recommendations",
//                                    "bias_words", "linked_entities"}
//   GET  /sessions/{id}             -> transcript
//   GET  /health                    -> {"status": "ok", "model_version"}
#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kbrd/metrics.hpp"
#include "kbrd/model.hpp"

namespace httplib {
class Server;
}

namespace kbrd {

struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ServiceOptions {
  std::size_t top_k = 5;
  std::size_t bias_k = 8;
  GenerateOptions generation;
  std::string model_version = "unknown";
  std::string transcript_path;  // append-only JSONL when non-empty
};

struct RecommendationEntry {
  std::string entity;
  double prob = 0.0;
};

struct TurnResult {
  std::string reply;
  std::vector<RecommendationEntry> recommendations;
  std::vector<BiasWord> bias_words;
  std::vector<std::string> linked_entities;
};

nlohmann::json to_json(const TurnResult& r);

struct ChatSession {
  std::string id;
  std::string created_at;  // UTC, ISO 8601
  std::vector<Turn> history;
  UserContext context;
  std::mutex mutex;
};

class ChatService {
 public:
  ChatService(std::shared_ptr<const KbrdModel> model, ServiceOptions opts);

  const ServiceOptions& options() const { return opts_; }
  const KbrdModel& model() const { return *model_; }

  std::string create_session();
  /// Throws LookupError for an unknown session and ValidationError for empty text.
  TurnResult handle_turn(const std::string& session_id, const std::string& text);
  nlohmann::json transcript(const std::string& session_id) const;
  UserContext context(const std::string& session_id) const;
  std::size_t session_count() const;

 private:
  std::shared_ptr<ChatSession> find(const std::string& id) const;
  void persist(const std::string& session_id, const Turn& turn);

  std::shared_ptr<const KbrdModel> model_;
  ServiceOptions opts_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<ChatSession>> sessions_;
  std::uint64_t next_id_ = 1;
  std::mutex persist_mutex_;
};

/// HTTP/1.1 front end for a ChatService.
class HttpServer {
 public:
  explicit HttpServer(ChatService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called.
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  ChatService& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace kbrd
