#include "leitsatz/service.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <httplib.h>

#include "leitsatz/hash.hpp"
#include "leitsatz/utf8.hpp"

namespace leitsatz::service {

using nlohmann::json;
using evalframe::SummaryRef;

json to_json(const ReviewItem& item) {
  return {{"item_id", item.item_id},
          {"gold_text", item.gold_text},
          {"candidate_text", item.candidate_text},
          {"judgment_excerpt", item.judgment_excerpt ? json(*item.judgment_excerpt) : json(nullptr)},
          {"position", {{"index", item.index}, {"total", item.total}}}};
}

VerdictSubmission submission_from_json(const json& j) {
  if (!j.is_object()) throw ApiError(400, "bad_request", "verdict body must be a JSON object");
  VerdictSubmission s;
  const auto id = j.find("item_id");
  if (id == j.end() || !id->is_string()) throw ApiError(400, "bad_request", "\"item_id\" must be a string");
  s.item_id = id->get<std::string>();
  const auto d = j.find("decisions");
  if (d == j.end() || !d->is_array() || d->size() != evalframe::kClassCount)
    throw ApiError(422, "validation", "\"decisions\" must hold exactly 7 booleans");
  for (std::size_t i = 0; i < evalframe::kClassCount; ++i) {
    if (!(*d)[i].is_boolean()) throw ApiError(422, "validation", "\"decisions\" must hold exactly 7 booleans");
    s.decisions[i] = (*d)[i].get<bool>();
  }
  if (const auto r = j.find("reasoning"); r != j.end() && !r->is_null()) {
    if (!r->is_string()) throw ApiError(422, "validation", "\"reasoning\" must be a string");
    s.reasoning = r->get<std::string>();
  }
  if (const auto c = j.find("comment"); c != j.end() && !c->is_null()) {
    if (!c->is_string()) throw ApiError(422, "validation", "\"comment\" must be a string");
    if (!utf8::trim(c->get<std::string>()).empty()) s.comment = c->get<std::string>();
  }
  return s;
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot replace " + path.string() + ": " + ec.message());
}

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string random_id() {
  std::random_device rd;
  std::ostringstream os;
  os << std::hex;
  for (int i = 0; i < 4; ++i) os << rd();
  return sha256_hex(os.str()).substr(0, 32);
}

}  // namespace

ReviewService::ReviewService(ReviewData data, ServiceOptions options)
    : data_(std::move(data)), options_(std::move(options)) {
  if (!options_.clock) options_.clock = utc_now;
  for (const auto& [reviewer, token] : options_.reviewer_tokens) {
    if (token.empty()) throw ConfigError("reviewer " + reviewer + " has an empty token");
    if (!token_to_reviewer_.emplace(token, reviewer).second) throw ConfigError("reviewer tokens must be unique");
    if (token == options_.admin_token) throw ConfigError("the admin token must differ from reviewer tokens");
  }
  std::set<std::string> reviewers;
  for (const auto& a : data_.assignments) {
    if (!data_.candidates.count(a.summary))
      throw DataError("assigned summary " + a.summary.judgment_id + "/" + a.summary.approach + " has no text");
    items_.emplace(item_id(a.summary), a.summary);
    reviewers.insert(a.reviewer_ids.begin(), a.reviewer_ids.end());
  }
  for (const auto& r : reviewers) queues_[r].order = evalframe::presentation_order(data_.assignments, r);

  if (!options_.store_path.empty() && std::filesystem::exists(options_.store_path)) {
    std::ifstream in(options_.store_path);
    store_ = evalframe::VerdictStore::import_jsonl(in);
  }
}

std::string ReviewService::item_id(const SummaryRef& summary) const {
  return sha256_hex(std::to_string(options_.item_seed) + '\x1f' + summary.judgment_id + '\x1f' + summary.approach)
      .substr(0, 24);
}

std::vector<std::string> ReviewService::reviewers() const {
  std::vector<std::string> out;
  for (const auto& [r, _] : queues_) out.push_back(r);
  return out;
}

std::string ReviewService::open_session(const std::string& token) {
  const auto it = token_to_reviewer_.find(token);
  if (token.empty() || it == token_to_reviewer_.end()) throw ApiError(401, "unauthenticated", "unknown reviewer token");
  auto id = random_id();
  std::unique_lock lock(sessions_mutex_);
  sessions_[id] = it->second;
  return id;
}

std::string ReviewService::reviewer_of(const std::string& session) const {
  std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(session);
  if (session.empty() || it == sessions_.end()) throw ApiError(401, "unauthenticated", "unknown or missing session");
  return it->second;
}

std::optional<ReviewItem> ReviewService::next(const std::string& session) const {
  const auto reviewer = reviewer_of(session);
  const auto q = queues_.find(reviewer);
  if (q == queues_.end()) return std::nullopt;
  const auto& order = q->second.order;
  std::size_t done = 0;
  const SummaryRef* pending = nullptr;
  for (const auto& ref : order) {
    if (store_.contains(reviewer, ref)) {
      ++done;
    } else if (!pending) {
      pending = &ref;
    }
  }
  if (!pending) return std::nullopt;
  ReviewItem item;
  item.item_id = item_id(*pending);
  item.candidate_text = data_.candidates.at(*pending);
  if (const auto g = data_.golds.find(pending->judgment_id); g != data_.golds.end()) item.gold_text = g->second;
  if (options_.show_excerpt) {
    if (const auto e = data_.excerpts.find(pending->judgment_id); e != data_.excerpts.end())
      item.judgment_excerpt = e->second;
  }
  item.index = done + 1;
  item.total = order.size();
  return item;
}

void ReviewService::submit(const std::string& session, const VerdictSubmission& submission) {
  const auto reviewer = reviewer_of(session);
  const auto item = items_.find(submission.item_id);
  const auto q = queues_.find(reviewer);
  if (item == items_.end() || q == queues_.end() ||
      std::find(q->second.order.begin(), q->second.order.end(), item->second) == q->second.order.end())
    throw ApiError(403, "forbidden", "item is not assigned to this reviewer");

  evalframe::ClassVerdict verdict{reviewer, item->second, submission.decisions, submission.reasoning,
                                  submission.comment, now()};
  std::lock_guard lock(write_mutex_);
  if (store_.contains(reviewer, item->second)) throw ApiError(409, "conflict", "verdict already submitted");
  try {
    evalframe::validate(verdict);
  } catch (const evalframe::ValidationError& e) {
    throw ApiError(422, "validation", e.what());
  }
  evalframe::VerdictStore next = store_;
  next.add(std::move(verdict));
  if (!options_.store_path.empty()) {
    std::ostringstream os;
    next.export_jsonl(os);
    atomic_write(options_.store_path, os.str());
  }
  store_ = next;
}

Progress ReviewService::progress(const std::string& session) const {
  const auto reviewer = reviewer_of(session);
  Progress p;
  const auto q = queues_.find(reviewer);
  if (q == queues_.end()) return p;
  for (const auto& ref : q->second.order) {
    if (store_.contains(reviewer, ref)) {
      ++p.done;
    } else {
      ++p.remaining;
    }
  }
  return p;
}

void ReviewService::export_annotations(const std::string& credential, std::ostream& out) const {
  if (credential.empty()) throw ApiError(401, "unauthenticated", "missing credential");
  if (options_.admin_token.empty() || credential != options_.admin_token)
    throw ApiError(403, "forbidden", "admin credential required");
  store_.export_jsonl(out);
}

std::string ReviewService::now() const { return options_.clock(); }

// ---------------------------------------------------------------------------

struct HttpFrontend::Impl {
  ReviewService& service;
  httplib::Server server;

  explicit Impl(ReviewService& s) : service(s) {}
};

namespace {

std::string bearer(const httplib::Request& req) {
  const auto h = req.get_header_value("Authorization");
  constexpr std::string_view prefix = "Bearer ";
  if (h.rfind(prefix, 0) != 0) return {};
  return std::string(utf8::trim(std::string_view(h).substr(prefix.size())));
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const ApiError& e) {
      send_json(res, e.status(), {{"code", e.code()}, {"message", e.what()}});
    } catch (const json::exception& e) {
      send_json(res, 400, {{"code", "bad_request"}, {"message", std::string("malformed JSON: ") + e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"code", "internal"}, {"message", e.what()}});
    }
  };
}

}  // namespace

HttpFrontend::HttpFrontend(ReviewService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& svc = impl_->service;
  auto& srv = impl_->server;

  srv.Post("/session", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    const auto token = body.is_object() ? body.value("token", std::string{}) : std::string{};
    const auto session = svc.open_session(token);
    send_json(res, 200, {{"session", session}, {"reviewer", svc.reviewer_of(session)}});
  }));

  srv.Get("/queue/next", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto item = svc.next(bearer(req));
    send_json(res, 200, item ? to_json(*item) : json{{"done", true}});
  }));

  srv.Post("/verdicts", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto session = bearer(req);
    svc.reviewer_of(session);
    svc.submit(session, submission_from_json(json::parse(req.body)));
    send_json(res, 201, {{"status", "stored"}});
  }));

  srv.Get("/progress", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto p = svc.progress(bearer(req));
    send_json(res, 200, {{"done", p.done}, {"remaining", p.remaining}});
  }));

  srv.Get("/admin/export", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    std::ostringstream os;
    svc.export_annotations(bearer(req), os);
    res.status = 200;
    res.set_content(os.str(), "application/x-ndjson; charset=utf-8");
  }));

  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty() && res.status == 404) send_json(res, 404, {{"code", "not_found"}, {"message", "no such route"}});
  });
}

HttpFrontend::~HttpFrontend() { stop(); }

int HttpFrontend::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw ServiceError("cannot bind " + host, false);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port))
    throw ServiceError("cannot bind " + host + ":" + std::to_string(port), false);
  return port;
}

void HttpFrontend::run() { impl_->server.listen_after_bind(); }

void HttpFrontend::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace leitsatz::service
