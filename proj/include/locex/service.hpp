#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "locex/data.hpp"
#include "locex/explain.hpp"
#include "locex/models.hpp"

namespace locex::service {

struct ServiceConfig {
  std::filesystem::path data_dir = "locex-data";
  std::size_t default_k = 10;
  std::size_t default_n = 5000;
  double default_sigma = 0.25;
  std::uint64_t master_seed = 0;
  double train_frac = 0.8;
  // Held-out instances explained per session round before picking.
  std::size_t session_pool = 100;
  bool load_dataset_dir = true;
};

struct Response {
  int status = 200;
  Json body;
};

// A registered corpus with its column layout and the train/held-out split
// every model trained on it shares.
struct Dataset {
  LabeledCorpus corpus;
  Vocabulary vocab;
  FeatureData train;
  FeatureData heldout;
  LabeledCorpus heldout_docs;
  std::uint64_t split_seed = 0;
};

struct StoredModel {
  std::string id;
  std::string dataset;
  ModelSpec spec;
  std::vector<std::string> removed_words;
  ModelPtr model;
  Json metrics;
  std::string model_hash;
};

struct SessionState {
  Json doc;  // the persisted session document
  std::mutex write_guard;
};

class Service {
 public:
  explicit Service(ServiceConfig cfg);

  const ServiceConfig& config() const noexcept { return cfg_; }

  // Replaces any dataset of the same name.
  void register_dataset(LabeledCorpus corpus);

  // Routes one request. Never throws; failures become 4xx/5xx bodies of
  // the form {"error": kind, "message": text}.
  Response handle(const std::string& method, const std::string& path, const std::string& body);

  Json list_datasets() const;
  Json create_model(const Json& req);
  Json explain(const std::string& model_id, const Json& req) const;
  Json pick(const std::string& model_id, const Json& req) const;
  Json create_session(const Json& req);
  Json add_round(const std::string& session_id, const Json& req);
  Json get_session(const std::string& session_id) const;

  // Takes the session's write guard exactly as a round does; rounds posted
  // while it is held get 409.
  std::unique_lock<std::mutex> hold_session(const std::string& session_id);

 private:
  std::shared_ptr<const Dataset> dataset(const std::string& name) const;
  std::shared_ptr<const StoredModel> model(const std::string& id) const;
  std::shared_ptr<SessionState> session(const std::string& id) const;

  std::shared_ptr<const StoredModel> train_and_store(const std::string& id, const std::string& dataset_name,
                                                     const ModelSpec& spec,
                                                     const std::vector<std::string>& removed);
  Json make_round(const Dataset& ds, const StoredModel& m, std::size_t index, const Json& session) const;

  void persist(const std::filesystem::path& path, const Json& doc) const;
  void load_models();
  void load_sessions();
  void load_dataset_dir();
  std::string next_id(const char* prefix, std::atomic<std::uint64_t>& counter) const;

  ServiceConfig cfg_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<const Dataset>> datasets_;
  std::map<std::string, std::shared_ptr<const StoredModel>> models_;
  std::map<std::string, std::shared_ptr<SessionState>> sessions_;
  std::atomic<std::uint64_t> model_counter_{0};
  std::atomic<std::uint64_t> session_counter_{0};
};

// Blocks serving HTTP on host:port until the process is stopped.
void serve(Service& service, const std::string& host, int port);

}  // namespace locex::service
