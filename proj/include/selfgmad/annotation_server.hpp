#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "selfgmad/datapool.hpp"
#include "selfgmad/subjective.hpp"

namespace selfgmad {

/// One single-stimulus rating study: every subject rates every item once,
/// in a seeded per-subject order. Thread-safe; ratings are appended to the
/// sink file by one writer at a time.
class AnnotationStudy {
 public:
  struct Item {
    std::string sample_id;
    std::string pair_id;
  };

  struct Progress {
    std::size_t done = 0;
    std::size_t total = 0;
  };

  struct NextItem {
    std::optional<std::string> sample_id;  // empty once the subject is finished
    Progress progress;
  };

  enum class Submit { Stored, Duplicate, OutOfRange, UnknownToken, UnknownSample, Closed };

  /// `sink` receives one ratings.jsonl line per stored rating. Existing lines
  /// in it are replayed so an interrupted study resumes.
  AnnotationStudy(std::vector<Item> items, std::size_t required_subjects, std::uint64_t seed,
                  std::filesystem::path sink);

  /// Opens (or reopens) the session of `subject_id`; returns its token.
  std::string open_session(const std::string& subject_id);
  std::optional<std::string> subject_of(const std::string& token) const;
  /// Presentation order of a session, empty for an unknown token.
  std::vector<std::string> order(const std::string& token) const;
  std::optional<NextItem> next(const std::string& token) const;
  Submit submit(const std::string& token, const std::string& sample_id, double rating);

  /// Ratings per subject.
  std::map<std::string, std::size_t> subject_counts() const;
  std::size_t items() const { return items_.size(); }
  std::size_t required_subjects() const { return required_; }
  bool complete() const;
  bool closed() const;
  void close();
  bool contains(const std::string& sample_id) const;
  std::vector<RatingRecord> ratings() const;

 private:
  struct Session {
    std::string subject_id;
    std::vector<std::size_t> order;
    std::map<std::string, double> rated;
  };

  bool complete_locked() const;
  void store_locked(std::size_t item, const std::string& subject, double rating, bool append);

  std::vector<Item> items_;
  std::map<std::string, std::size_t> item_index_;
  std::size_t required_;
  std::uint64_t seed_;
  std::filesystem::path sink_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Session> sessions_;        // by token
  std::map<std::string, std::string> token_of_;    // by subject
  std::vector<std::size_t> ratings_per_item_;
  std::vector<RatingRecord> records_;
  bool closed_ = false;
};

/// JSON-over-HTTP front end of a study:
///   POST /api/session                      {"subject_id"}
///   GET  /api/session/{token}/next
///   POST /api/session/{token}/rating       {"sample_id","rating"}
///   GET  /api/study/progress
///   GET  /api/stimulus/{sample_id}
///   POST /api/study/close
class AnnotationServer {
 public:
  AnnotationServer(AnnotationStudy& study, const SampleIndex& samples);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  /// Binds to host:port (port 0 picks a free one) and returns the bound port,
  /// or -1 on failure.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace selfgmad
