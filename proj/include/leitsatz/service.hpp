#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "leitsatz/error.hpp"
#include "leitsatz/evalframe.hpp"

namespace leitsatz::service {

/// What a reviewer sees for one summary. Deliberately carries nothing that
/// identifies the approach.
struct ReviewItem {
  std::string item_id;
  std::string gold_text;
  std::string candidate_text;
  std::optional<std::string> judgment_excerpt;
  std::size_t index = 0;  // 1-based
  std::size_t total = 0;
};

nlohmann::json to_json(const ReviewItem& item);

struct Progress {
  std::size_t done = 0;
  std::size_t remaining = 0;
};

/// Maps to an HTTP status and a short machine-readable code.
class ApiError : public Error {
 public:
  ApiError(int status, std::string code, const std::string& message)
      : Error(message), status_(status), code_(std::move(code)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }

 private:
  int status_;
  std::string code_;
};

struct ReviewData {
  std::vector<evalframe::Assignment> assignments;
  std::map<evalframe::SummaryRef, std::string> candidates;
  std::map<std::string, std::string> golds;     // by judgment id
  std::map<std::string, std::string> excerpts;  // by judgment id
};

struct ServiceOptions {
  std::map<std::string, std::string> reviewer_tokens;  // reviewer -> token
  std::string admin_token;
  std::filesystem::path store_path;  // empty keeps verdicts in memory only
  bool show_excerpt = true;
  std::uint64_t item_seed = 0;
  std::function<std::string()> clock;  // ISO-8601 timestamps; UTC now by default
};

struct VerdictSubmission {
  std::string item_id;
  evalframe::Decisions decisions{};
  std::string reasoning;
  std::optional<std::string> comment;
};

VerdictSubmission submission_from_json(const nlohmann::json& j);

/// Blinded review queues over a fixed assignment. Thread-safe: writes go
/// through one mutex and are persisted by atomic file replacement before
/// they are acknowledged.
class ReviewService {
 public:
  ReviewService(ReviewData data, ServiceOptions options);

  /// Exchanges a reviewer token for a session id. 401 on unknown tokens.
  std::string open_session(const std::string& token);
  /// 401 when the session is unknown.
  std::string reviewer_of(const std::string& session) const;

  /// Next unsubmitted item in the reviewer's presentation order, or empty
  /// when the queue is done.
  std::optional<ReviewItem> next(const std::string& session) const;
  /// 403 unassigned item, 409 already submitted, 422 invalid verdict.
  void submit(const std::string& session, const VerdictSubmission& submission);
  Progress progress(const std::string& session) const;

  /// 401 without a credential, 403 for anything but the admin token.
  void export_annotations(const std::string& credential, std::ostream& out) const;

  std::string item_id(const evalframe::SummaryRef& summary) const;
  std::vector<std::string> reviewers() const;
  evalframe::VerdictStore& store() { return store_; }

 private:
  struct Queue {
    std::vector<evalframe::SummaryRef> order;
  };

  void persist() const;
  std::string now() const;

  ReviewData data_;
  ServiceOptions options_;
  std::map<std::string, std::string> token_to_reviewer_;
  std::map<std::string, Queue> queues_;
  std::map<std::string, evalframe::SummaryRef> items_;

  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::string> sessions_;  // session -> reviewer

  std::mutex write_mutex_;
  evalframe::VerdictStore store_;
};

/// Writes `content` to a sibling temp file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& content);

/// JSON-over-HTTP front end. Routes:
///   POST /session        {"token"}                    -> {"session","reviewer"}
///   GET  /queue/next     Bearer session               -> ReviewItem | {"done":true}
///   POST /verdicts       Bearer session, submission   -> 201 {"status":"stored"}
///   GET  /progress       Bearer session               -> {"done","remaining"}
///   GET  /admin/export   Bearer admin token           -> JSONL
/// Errors are {"code","message"}.
class HttpFrontend {
 public:
  explicit HttpFrontend(ReviewService& service);
  ~HttpFrontend();
  HttpFrontend(const HttpFrontend&) = delete;
  HttpFrontend& operator=(const HttpFrontend&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Call after bind().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace leitsatz::service
