#include "selfgmad/annotation_server.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include <httplib.h>
#include <json.hpp>

#include "selfgmad/error.hpp"
#include "selfgmad/render.hpp"
#include "selfgmad/rng.hpp"

namespace selfgmad {

using nlohmann::json;

AnnotationStudy::AnnotationStudy(std::vector<Item> items, std::size_t required_subjects, std::uint64_t seed,
                                 std::filesystem::path sink)
    : items_(std::move(items)), required_(required_subjects), seed_(seed), sink_(std::move(sink)) {
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (!item_index_.emplace(items_[i].sample_id, i).second) {
      throw DataError("study lists sample " + items_[i].sample_id + " twice");
    }
  }
  ratings_per_item_.assign(items_.size(), 0);
  if (std::filesystem::is_regular_file(sink_)) {
    for (const auto& r : load_ratings(sink_)) {
      auto it = item_index_.find(r.sample_id);
      if (it == item_index_.end()) throw DataError(sink_.string() + " rates sample " + r.sample_id + " outside the study");
      open_session(r.subject_id);
      std::unique_lock lock(mutex_);
      auto& session = sessions_.at(token_of_.at(r.subject_id));
      if (session.rated.count(r.sample_id)) continue;
      session.rated.emplace(r.sample_id, r.rating);
      store_locked(it->second, r.subject_id, r.rating, false);
    }
    std::unique_lock lock(mutex_);
    closed_ = complete_locked();
  } else if (sink_.has_parent_path()) {
    std::filesystem::create_directories(sink_.parent_path());
  }
}

std::string AnnotationStudy::open_session(const std::string& subject_id) {
  if (subject_id.empty()) throw std::invalid_argument("subject_id must be non-empty");
  std::unique_lock lock(mutex_);
  auto existing = token_of_.find(subject_id);
  if (existing != token_of_.end()) return existing->second;
  const std::string token = hex64(mix_seed(seed_, "session:" + subject_id));
  Session session;
  session.subject_id = subject_id;
  session.order.resize(items_.size());
  std::iota(session.order.begin(), session.order.end(), 0);
  Rng rng(mix_seed(seed_, "order:" + subject_id));
  shuffle(session.order, rng);
  sessions_.emplace(token, std::move(session));
  token_of_.emplace(subject_id, token);
  return token;
}

std::optional<std::string> AnnotationStudy::subject_of(const std::string& token) const {
  std::shared_lock lock(mutex_);
  auto it = sessions_.find(token);
  if (it == sessions_.end()) return std::nullopt;
  return it->second.subject_id;
}

std::vector<std::string> AnnotationStudy::order(const std::string& token) const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  auto it = sessions_.find(token);
  if (it == sessions_.end()) return out;
  for (auto i : it->second.order) out.push_back(items_[i].sample_id);
  return out;
}

std::optional<AnnotationStudy::NextItem> AnnotationStudy::next(const std::string& token) const {
  std::shared_lock lock(mutex_);
  auto it = sessions_.find(token);
  if (it == sessions_.end()) return std::nullopt;
  const Session& s = it->second;
  NextItem next;
  next.progress = {s.rated.size(), items_.size()};
  for (auto i : s.order) {
    if (!s.rated.count(items_[i].sample_id)) {
      next.sample_id = items_[i].sample_id;
      break;
    }
  }
  return next;
}

AnnotationStudy::Submit AnnotationStudy::submit(const std::string& token, const std::string& sample_id, double rating) {
  std::unique_lock lock(mutex_);
  auto it = sessions_.find(token);
  if (it == sessions_.end()) return Submit::UnknownToken;
  if (closed_) return Submit::Closed;
  if (!(rating >= 0.0 && rating <= 100.0)) return Submit::OutOfRange;
  auto item = item_index_.find(sample_id);
  if (item == item_index_.end()) return Submit::UnknownSample;
  Session& s = it->second;
  if (s.rated.count(sample_id)) return Submit::Duplicate;
  s.rated.emplace(sample_id, rating);
  store_locked(item->second, s.subject_id, rating, true);
  if (complete_locked()) closed_ = true;
  return Submit::Stored;
}

void AnnotationStudy::store_locked(std::size_t item, const std::string& subject, double rating, bool append) {
  RatingRecord record{items_[item].pair_id, items_[item].sample_id, subject, rating, RatingFlag::Kept};
  if (append) {
    std::ofstream out(sink_, std::ios::binary | std::ios::app);
    if (!out) throw DataError("cannot append to " + sink_.string());
    json line = {{"pair_id", record.pair_id},
                 {"sample_id", record.sample_id},
                 {"subject_id", record.subject_id},
                 {"rating", record.rating},
                 {"flag", "kept"}};
    out << line.dump() << '\n';
    out.flush();
    if (!out) throw DataError("write failed for " + sink_.string());
  }
  ++ratings_per_item_[item];
  records_.push_back(std::move(record));
}

std::map<std::string, std::size_t> AnnotationStudy::subject_counts() const {
  std::shared_lock lock(mutex_);
  std::map<std::string, std::size_t> counts;
  for (const auto& [token, s] : sessions_) counts[s.subject_id] = s.rated.size();
  return counts;
}

bool AnnotationStudy::complete_locked() const {
  if (items_.empty()) return false;
  for (auto n : ratings_per_item_) {
    if (n < required_) return false;
  }
  return true;
}

bool AnnotationStudy::complete() const {
  std::shared_lock lock(mutex_);
  return complete_locked();
}

bool AnnotationStudy::closed() const {
  std::shared_lock lock(mutex_);
  return closed_;
}

void AnnotationStudy::close() {
  std::unique_lock lock(mutex_);
  closed_ = true;
}

bool AnnotationStudy::contains(const std::string& sample_id) const { return item_index_.count(sample_id) != 0; }

std::vector<RatingRecord> AnnotationStudy::ratings() const {
  std::shared_lock lock(mutex_);
  return records_;
}

// ---------------------------------------------------------------------------
// HTTP

struct AnnotationServer::Impl {
  AnnotationStudy& study;
  const SampleIndex& samples;
  httplib::Server server;
  int port = -1;

  // Each rater browser holds a keep-alive connection and a worker thread, so
  // the pool is sized for a full panel regardless of core count.
  static constexpr std::size_t kWorkers = 64;

  Impl(AnnotationStudy& st, const SampleIndex& sa) : study(st), samples(sa) {
    server.new_task_queue = [] { return new httplib::ThreadPool(kWorkers); };
    routes();
  }

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
    try {
      json body = json::parse(req.body);
      if (!body.is_object()) throw std::invalid_argument("body must be an object");
      return body;
    } catch (const std::exception& e) {
      reply(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
      return std::nullopt;
    }
  }

  void routes() {
    server.Post("/api/session", [this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req, res);
      if (!body) return;
      if (!body->contains("subject_id") || !body->at("subject_id").is_string() ||
          body->at("subject_id").get<std::string>().empty()) {
        reply(res, 422, {{"error", "subject_id must be a non-empty string"}});
        return;
      }
      if (study.closed()) {
        reply(res, 409, {{"error", "study closed"}});
        return;
      }
      const auto subject = body->at("subject_id").get<std::string>();
      const auto token = study.open_session(subject);
      reply(res, 200, {{"token", token}, {"subject_id", subject}, {"order", study.order(token)}});
    });

    server.Get(R"(/api/session/([^/]+)/next)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto next = study.next(req.matches[1]);
      if (!next) {
        reply(res, 404, {{"error", "unknown session token"}});
        return;
      }
      json progress = {{"done", next->progress.done}, {"total", next->progress.total}};
      if (!next->sample_id) {
        reply(res, 200, {{"done", true}, {"progress", progress}});
        return;
      }
      reply(res, 200,
            {{"done", false},
             {"sample_id", *next->sample_id},
             {"display", "/api/stimulus/" + *next->sample_id},
             {"progress", progress}});
    });

    server.Post(R"(/api/session/([^/]+)/rating)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string token = req.matches[1];
      if (!study.subject_of(token)) {
        reply(res, 404, {{"error", "unknown session token"}});
        return;
      }
      auto body = parse_body(req, res);
      if (!body) return;
      if (!body->contains("sample_id") || !body->at("sample_id").is_string()) {
        reply(res, 422, {{"error", "sample_id must be a string"}});
        return;
      }
      if (!body->contains("rating") || !body->at("rating").is_number()) {
        reply(res, 422, {{"error", "rating must be a number in [0,100]"}});
        return;
      }
      const auto sample_id = body->at("sample_id").get<std::string>();
      switch (study.submit(token, sample_id, body->at("rating").get<double>())) {
        case AnnotationStudy::Submit::Stored: reply(res, 200, {{"stored", true}}); return;
        case AnnotationStudy::Submit::Duplicate:
          reply(res, 200, {{"stored", false}, {"reason", "duplicate"}});
          return;
        case AnnotationStudy::Submit::OutOfRange:
          reply(res, 422, {{"error", "rating must lie in [0,100]"}});
          return;
        case AnnotationStudy::Submit::UnknownSample:
          reply(res, 422, {{"error", "sample " + sample_id + " is not part of this study"}});
          return;
        case AnnotationStudy::Submit::UnknownToken: reply(res, 404, {{"error", "unknown session token"}}); return;
        case AnnotationStudy::Submit::Closed: reply(res, 409, {{"error", "study closed"}}); return;
      }
    });

    server.Get("/api/study/progress", [this](const httplib::Request&, httplib::Response& res) {
      json subjects = json::object();
      for (const auto& [id, n] : study.subject_counts()) subjects[id] = n;
      reply(res, 200,
            {{"subjects", subjects},
             {"items", study.items()},
             {"required_subjects", study.required_subjects()},
             {"complete", study.complete()},
             {"closed", study.closed()}});
    });

    server.Get(R"(/api/stimulus/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const Sample* sample = study.contains(id) ? samples.find(id) : nullptr;
      if (!sample) {
        reply(res, 404, {{"error", "unknown stimulus"}});
        return;
      }
      try {
        const Stimulus stimulus = render_sample(*sample);
        res.status = 200;
        res.set_content(std::string(stimulus.bytes.begin(), stimulus.bytes.end()), stimulus.content_type);
      } catch (const std::exception& e) {
        reply(res, 500, {{"error", e.what()}});
      }
    });

    server.Post("/api/study/close", [this](const httplib::Request&, httplib::Response& res) {
      study.close();
      reply(res, 200, {{"closed", true}});
    });
  }
};

AnnotationServer::AnnotationServer(AnnotationStudy& study, const SampleIndex& samples)
    : impl_(std::make_unique<Impl>(study, samples)) {}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port) {
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  return impl_->port;
}

void AnnotationServer::serve() { impl_->server.listen_after_bind(); }

void AnnotationServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace selfgmad
