#include "kbrd/service.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <httplib.h>

#include "kbrd/text.hpp"

namespace kbrd {

using nlohmann::json;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

json turn_json(const Turn& t) {
  return {{"speaker", std::string(to_string(t.speaker))}, {"text", t.text}, {"items", t.items}};
}

}  // namespace

json to_json(const TurnResult& r) {
  json recs = json::array();
  for (const auto& e : r.recommendations) recs.push_back({{"entity", e.entity}, {"prob", e.prob}});
  json bias = json::array();
  for (const auto& b : r.bias_words) bias.push_back({{"word", b.word}, {"bias", b.bias}});
  return {{"reply", r.reply}, {"recommendations", recs}, {"bias_words", bias}, {"linked_entities", r.linked_entities}};
}

ChatService::ChatService(std::shared_ptr<const KbrdModel> model, ServiceOptions opts)
    : model_(std::move(model)), opts_(std::move(opts)) {
  if (!model_) throw ConfigError("chat service needs a model");
}

std::string ChatService::create_session() {
  auto s = std::make_shared<ChatSession>();
  s->created_at = utc_now();
  std::unique_lock lock(sessions_mutex_);
  s->id = "sess-" + std::to_string(next_id_++);
  sessions_.emplace(s->id, s);
  return s->id;
}

std::shared_ptr<ChatSession> ChatService::find(const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw LookupError("unknown session '" + id + "'");
  return it->second;
}

std::size_t ChatService::session_count() const {
  std::shared_lock lock(sessions_mutex_);
  return sessions_.size();
}

void ChatService::persist(const std::string& session_id, const Turn& turn) {
  if (opts_.transcript_path.empty()) return;
  json line = turn_json(turn);
  line["session_id"] = session_id;
  std::lock_guard lock(persist_mutex_);
  std::ofstream out(opts_.transcript_path, std::ios::app | std::ios::binary);
  if (out) out << line.dump() << '\n';
}

TurnResult ChatService::handle_turn(const std::string& session_id, const std::string& text) {
  if (tokenize(text).empty()) throw ValidationError("message text must not be empty");
  auto session = find(session_id);
  std::lock_guard lock(session->mutex);
  const KbrdModel& m = *model_;

  TurnResult r;
  Turn user{Speaker::user, text, {}};
  for (const auto& span : m.lexicon().link_spans(text)) {
    const std::string& name = m.graph().entity_name(span.entity);
    if (std::find(r.linked_entities.begin(), r.linked_entities.end(), name) == r.linked_entities.end())
      r.linked_entities.push_back(name);
    if (m.graph().is_item(span.entity) && std::find(user.items.begin(), user.items.end(), name) == user.items.end())
      user.items.push_back(name);
  }
  session->history.push_back(user);
  persist(session_id, user);
  session->context = m.context_for(session->history);

  const Response reply = m.generate(session->history, opts_.generation);
  const Recommendation rec = m.recommend(session->context);
  for (std::size_t i = 0; i < std::min(opts_.top_k, rec.ranked_items.size()); ++i)
    r.recommendations.push_back({m.graph().entity_name(rec.ranked_items[i].entity), rec.ranked_items[i].prob});
  if (opts_.bias_k > 0) r.bias_words = top_bias_words(m, session->context, opts_.bias_k);
  r.reply = reply.text;

  Turn bot{Speaker::recommender, reply.text, {}};
  for (EntityId e : reply.emitted_items) bot.items.push_back(m.graph().entity_name(e));
  session->history.push_back(bot);
  persist(session_id, bot);
  session->context = m.context_for(session->history);
  return r;
}

json ChatService::transcript(const std::string& session_id) const {
  auto session = find(session_id);
  std::lock_guard lock(session->mutex);
  json turns = json::array();
  for (const auto& t : session->history) turns.push_back(turn_json(t));
  json ctx = json::array();
  for (EntityId e : session->context.entity_ids) ctx.push_back(model_->graph().entity_name(e));
  return {{"session_id", session->id}, {"created_at", session->created_at}, {"turns", turns}, {"context", ctx}};
}

UserContext ChatService::context(const std::string& session_id) const {
  auto session = find(session_id);
  std::lock_guard lock(session->mutex);
  return session->context;
}

// ---- HTTP -----------------------------------------------------------------

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& msg) { send_json(res, status, {{"error", msg}}); }

}  // namespace

HttpServer::HttpServer(ChatService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  srv.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}, {"model_version", service_.options().model_version}});
  });
  srv.Post("/sessions", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 201, {{"session_id", service_.create_session()}});
  });
  srv.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      send_json(res, 200, service_.transcript(req.matches[1]));
    } catch (const LookupError& e) {
      send_error(res, 404, e.what());
    }
  });
  srv.Post(R"(/sessions/([^/]+)/messages)", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error&) {
      return send_error(res, 400, "request body is not valid JSON");
    }
    if (!body.is_object() || !body.contains("text") || !body["text"].is_string())
      return send_error(res, 400, "request body must be an object with a string 'text'");
    try {
      send_json(res, 200, to_json(service_.handle_turn(req.matches[1], body["text"].get<std::string>())));
    } catch (const LookupError& e) {
      send_error(res, 404, e.what());
    } catch (const ValidationError& e) {
      send_error(res, 400, e.what());
    }
  });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    } catch (...) {
      send_error(res, 500, "internal error");
    }
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool HttpServer::listen_after_bind() { return server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

void HttpServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace kbrd
