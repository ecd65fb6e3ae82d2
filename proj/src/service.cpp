#include "locex/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "locex/error.hpp"
#include "locex/pick.hpp"
#include "locex/rng.hpp"

namespace locex::service {

namespace fs = std::filesystem;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNotFound: return 404;
    case ErrorKind::kCollision: return 409;
    case ErrorKind::kIo: return 500;
    default: return 422;
  }
}

Response error_response(int status, std::string_view kind, std::string_view message) {
  return {status, Json{{"error", kind}, {"message", message}}};
}

// Typed field access; a wrong type is a bad parameter.
template <typename T>
T field(const Json& req, const char* key, T fallback) {
  if (!req.contains(key) || req.at(key).is_null()) return fallback;
  const auto& v = req.at(key);
  if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw Error(ErrorKind::kConfig, std::string(key) + " must be a string");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw Error(ErrorKind::kConfig, std::string(key) + " must be a number");
  } else {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw Error(ErrorKind::kConfig, std::string(key) + " must be a non-negative integer");
    }
  }
  return v.get<T>();
}

std::string required_string(const Json& req, const char* key) {
  if (!req.contains(key)) throw Error(ErrorKind::kConfig, std::string("missing field '") + key + "'");
  return field<std::string>(req, key, {});
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '/')) {
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

std::uint64_t id_number(const std::string& id, const std::string& prefix) {
  if (id.rfind(prefix, 0) != 0) return 0;
  const auto tail = id.substr(prefix.size());
  if (tail.empty() || !std::all_of(tail.begin(), tail.end(), ::isdigit)) return 0;
  return std::stoull(tail);
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::kParse, path.string() + ": " + e.what());
  }
}

ModelSpec parse_spec(const Json& j, std::uint64_t default_seed) {
  if (!j.is_object()) throw Error(ErrorKind::kConfig, "model spec must be an object");
  ModelSpec spec;
  spec.kind = required_string(j, "kind");
  if (!is_supported_kind(spec.kind)) throw Error(ErrorKind::kConfig, "unsupported model kind '" + spec.kind + "'");
  if (j.contains("params") && !j.at("params").is_null()) {
    if (!j.at("params").is_object()) throw Error(ErrorKind::kConfig, "params must be an object");
    spec.params = j.at("params");
  }
  spec.seed = field<std::uint64_t>(j, "seed", default_seed);
  return spec;
}

}  // namespace

Service::Service(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  fs::create_directories(cfg_.data_dir / "models");
  fs::create_directories(cfg_.data_dir / "sessions");
  if (cfg_.load_dataset_dir) load_dataset_dir();
  load_models();
  load_sessions();
}

void Service::register_dataset(LabeledCorpus corpus) {
  if (corpus.name.empty()) throw Error(ErrorKind::kConfig, "dataset needs a name");
  auto ds = std::make_shared<Dataset>();
  ds->split_seed = cfg_.master_seed;
  auto parts = split(corpus, cfg_.train_frac, ds->split_seed);
  ds->vocab = build_vocabulary(corpus.docs);
  ds->train = to_features(parts.train.docs, ds->vocab);
  ds->heldout = to_features(parts.test.docs, ds->vocab);
  ds->heldout_docs = std::move(parts.test);
  ds->corpus = std::move(corpus);
  std::unique_lock lock(mutex_);
  datasets_[ds->corpus.name] = std::move(ds);
}

void Service::load_dataset_dir() {
  const auto dir = cfg_.data_dir / "datasets";
  if (!fs::is_directory(dir)) return;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto corpus = load_jsonl(f);
    corpus.name = f.stem().string();
    register_dataset(std::move(corpus));
  }
}

std::string Service::next_id(const char* prefix, std::atomic<std::uint64_t>& counter) const {
  return std::string(prefix) + std::to_string(++counter);
}

void Service::persist(const fs::path& path, const Json& doc) const {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    out << doc.dump(2) << '\n';
    if (!out.flush()) throw Error(ErrorKind::kIo, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot rename " + tmp.string() + ": " + ec.message());
}

void Service::load_models() {
  for (const auto& entry : fs::directory_iterator(cfg_.data_dir / "models")) {
    if (entry.path().extension() != ".json") continue;
    const auto doc = read_json(entry.path());
    auto m = std::make_shared<StoredModel>();
    m->id = doc.at("id").get<std::string>();
    m->dataset = doc.at("dataset").get<std::string>();
    m->spec = ModelSpec::from_json(doc.at("spec"));
    m->removed_words = doc.at("removed_words").get<std::vector<std::string>>();
    m->metrics = doc.at("metrics");
    m->model_hash = doc.at("model_hash").get<std::string>();
    m->model = model_from_document(doc.at("document"));
    model_counter_ = std::max<std::uint64_t>(model_counter_, id_number(m->id, "model-"));
    models_[m->id] = std::move(m);
  }
}

void Service::load_sessions() {
  for (const auto& entry : fs::directory_iterator(cfg_.data_dir / "sessions")) {
    if (entry.path().extension() != ".json") continue;
    auto s = std::make_shared<SessionState>();
    s->doc = read_json(entry.path());
    const auto id = s->doc.at("id").get<std::string>();
    session_counter_ = std::max<std::uint64_t>(session_counter_, id_number(id, "session-"));
    sessions_[id] = std::move(s);
  }
}

std::shared_ptr<const Dataset> Service::dataset(const std::string& name) const {
  std::shared_lock lock(mutex_);
  const auto it = datasets_.find(name);
  if (it == datasets_.end()) throw Error(ErrorKind::kNotFound, "unknown dataset '" + name + "'");
  return it->second;
}

std::shared_ptr<const StoredModel> Service::model(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto it = models_.find(id);
  if (it == models_.end()) throw Error(ErrorKind::kNotFound, "unknown model '" + id + "'");
  return it->second;
}

std::shared_ptr<SessionState> Service::session(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorKind::kNotFound, "unknown session '" + id + "'");
  return it->second;
}

Json Service::list_datasets() const {
  std::shared_lock lock(mutex_);
  Json out = Json::array();
  for (const auto& [name, ds] : datasets_) {
    out.push_back({{"name", name}, {"n_docs", ds->corpus.size()}, {"d_prime", ds->vocab.size()}});
  }
  return out;
}

std::shared_ptr<const StoredModel> Service::train_and_store(const std::string& id, const std::string& dataset_name,
                                                            const ModelSpec& spec,
                                                            const std::vector<std::string>& removed) {
  const auto ds = dataset(dataset_name);
  std::vector<Column> cols;
  for (const auto& w : removed) {
    const auto c = ds->vocab.find(w);
    if (!c) throw Error(ErrorKind::kConfig, "unknown word '" + w + "'");
    cols.push_back(*c);
  }
  std::sort(cols.begin(), cols.end());
  auto m = std::make_shared<StoredModel>();
  m->id = id;
  m->dataset = dataset_name;
  m->spec = spec;
  m->removed_words = removed;
  m->model = retrain_without(spec, cols, ds->train);
  m->metrics = {{"train_accuracy", accuracy(*m->model, ds->train)},
                {"heldout_accuracy", accuracy(*m->model, ds->heldout)},
                {"n_train", ds->train.size()},
                {"n_heldout", ds->heldout.size()}};
  const Json document = model_document(*m->model, ds->vocab.hash());
  m->model_hash = hex64(fnv1a(document.at("model").dump()));
  persist(cfg_.data_dir / "models" / (id + ".json"),
          Json{{"id", id},
               {"dataset", dataset_name},
               {"spec", spec.to_json()},
               {"removed_words", removed},
               {"split_seed", ds->split_seed},
               {"metrics", m->metrics},
               {"model_hash", m->model_hash},
               {"document", document}});
  std::unique_lock lock(mutex_);
  models_[id] = m;
  return m;
}

Json Service::create_model(const Json& req) {
  const auto name = required_string(req, "dataset");
  dataset(name);
  Json spec_json{{"kind", required_string(req, "kind")}};
  if (req.contains("params")) spec_json["params"] = req.at("params");
  if (req.contains("seed")) spec_json["seed"] = req.at("seed");
  const auto spec = parse_spec(spec_json, cfg_.master_seed);
  const auto m = train_and_store(next_id("model-", model_counter_), name, spec, {});
  return {{"model_id", m->id}, {"metrics", m->metrics}, {"model_hash", m->model_hash}, {"spec", spec.to_json()}};
}

namespace {

ExplanationConfig explanation_config(const Json& req, const ServiceConfig& cfg) {
  ExplanationConfig c;
  c.k = field<std::size_t>(req, "k", cfg.default_k);
  c.n = field<std::size_t>(req, "n", cfg.default_n);
  c.kernel.sigma = field<double>(req, "sigma", cfg.default_sigma);
  c.seed = field<std::uint64_t>(req, "seed", cfg.master_seed);
  if (c.k == 0) throw Error(ErrorKind::kConfig, "k must be >= 1");
  if (c.n < 2) throw Error(ErrorKind::kConfig, "n must be >= 2");
  if (!(c.kernel.sigma > 0.0)) throw Error(ErrorKind::kConfig, "sigma must be > 0");
  return c;
}

const Document& heldout_doc(const Dataset& ds, std::size_t index) {
  if (index >= ds.heldout.size()) {
    throw Error(ErrorKind::kRange, "instance_index " + std::to_string(index) + " outside held-out set of " +
                                       std::to_string(ds.heldout.size()));
  }
  return ds.heldout_docs.docs[index];
}

}  // namespace

Json Service::explain(const std::string& model_id, const Json& req) const {
  const auto m = model(model_id);
  const auto ds = dataset(m->dataset);
  const auto cfg = explanation_config(req, cfg_);
  if (req.contains("text") && !req.at("text").is_null()) {
    const auto doc = Document::from_text("text", field<std::string>(req, "text", {}));
    return explain_instance(*m->model, doc, ds->vocab, cfg).to_json();
  }
  if (!req.contains("instance_index")) throw Error(ErrorKind::kConfig, "need instance_index or text");
  const auto index = field<std::size_t>(req, "instance_index", 0);
  const auto& doc = heldout_doc(*ds, index);
  return explain_instance(*m->model, ds->heldout.rows[index], ds->vocab, cfg, doc.id).to_json();
}

Json Service::pick(const std::string& model_id, const Json& req) const {
  const auto m = model(model_id);
  const std::size_t budget = field<std::size_t>(req, "B", 0);
  if (budget == 0) throw Error(ErrorKind::kConfig, "B must be >= 1");

  // A caller-supplied explanation matrix skips the explanation step.
  if (req.contains("matrix")) {
    const auto rows = req.at("matrix").get<std::vector<std::vector<double>>>();
    if (rows.empty()) throw Error(ErrorKind::kConfig, "empty matrix");
    std::vector<double> flat;
    for (const auto& r : rows) {
      if (r.size() != rows.front().size()) throw Error(ErrorKind::kShape, "ragged matrix");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    const auto w = make_matrix(std::move(flat), rows.size(), rows.front().size());
    const auto result = submodular_pick(w, budget);
    return {{"selected", result.selected}, {"coverage_trace", result.coverage_trace}, {"explanations", Json::array()}};
  }

  if (!req.contains("instance_indices") || !req.at("instance_indices").is_array()) {
    throw Error(ErrorKind::kConfig, "instance_indices must be a list");
  }
  const auto indices = req.at("instance_indices").get<std::vector<std::size_t>>();
  if (indices.empty()) throw Error(ErrorKind::kConfig, "empty instance list");
  const auto ds = dataset(m->dataset);
  auto cfg = explanation_config(req, cfg_);
  const std::uint64_t seed = cfg.seed;
  std::vector<Explanation> explanations;
  for (auto index : indices) {
    const auto& doc = heldout_doc(*ds, index);
    cfg.seed = derive_seed(seed, index);
    explanations.push_back(explain_instance(*m->model, ds->heldout.rows[index], ds->vocab, cfg, doc.id));
  }
  const auto w = build_matrix(explanations, ds->vocab.size());
  const auto result = submodular_pick(w, budget);
  Json selected = Json::array();
  Json picked = Json::array();
  for (auto row : result.selected) {
    selected.push_back(indices[row]);
    picked.push_back(explanations[row].to_json());
  }
  return {{"selected", selected}, {"coverage_trace", result.coverage_trace}, {"explanations", picked}};
}

Json Service::make_round(const Dataset& ds, const StoredModel& m, std::size_t index, const Json& session) const {
  ExplanationConfig cfg;
  cfg.k = session.at("k").get<std::size_t>();
  cfg.n = session.at("n").get<std::size_t>();
  cfg.kernel.sigma = session.at("sigma").get<double>();
  const auto seed = session.at("seed").get<std::uint64_t>();
  const auto budget = session.at("B").get<std::size_t>();

  std::vector<std::size_t> pool;
  std::vector<Explanation> explanations;
  const std::size_t limit = std::min(cfg_.session_pool, ds.heldout.size());
  for (std::size_t i = 0; i < limit; ++i) {
    cfg.seed = derive_seed(seed, i);
    try {
      explanations.push_back(
          explain_instance(*m.model, ds.heldout.rows[i], ds.vocab, cfg, ds.heldout_docs.docs[i].id));
    } catch (const Error& e) {
      // Documents made of removed words alone have nothing to explain.
      if (e.kind() != ErrorKind::kDegenerateInstance) throw;
      continue;
    }
    pool.push_back(i);
  }
  if (explanations.empty()) throw Error(ErrorKind::kDegenerateInstance, "no explainable held-out instance");
  const auto w = build_matrix(explanations, ds.vocab.size());
  const auto result = submodular_pick(w, budget);
  Json picked = Json::array();
  for (auto row : result.selected) {
    picked.push_back({{"instance_index", pool[row]},
                      {"text", ds.heldout_docs.docs[pool[row]].text},
                      {"label", ds.heldout.labels[pool[row]]},
                      {"prediction", m.model->predict_prob(ds.heldout.rows[pool[row]])},
                      {"explanation", explanations[row].to_json()}});
  }
  std::vector<std::string> removed = m.removed_words;
  std::sort(removed.begin(), removed.end());
  return {{"index", index},
          {"removed_words_cumulative", removed},
          {"model_version", m.id},
          {"metrics", m.metrics},
          {"coverage_trace", result.coverage_trace},
          {"picked", picked}};
}

Json Service::create_session(const Json& req) {
  const auto name = required_string(req, "dataset");
  const auto ds = dataset(name);
  if (!req.contains("model_spec")) throw Error(ErrorKind::kConfig, "missing field 'model_spec'");
  const auto spec = parse_spec(req.at("model_spec"), cfg_.master_seed);
  const auto cfg = explanation_config(req, cfg_);
  const std::size_t budget = field<std::size_t>(req, "B", 10);
  if (budget == 0) throw Error(ErrorKind::kConfig, "B must be >= 1");

  const auto id = next_id("session-", session_counter_);
  Json doc{{"id", id},
           {"dataset", name},
           {"model_spec", spec.to_json()},
           {"B", budget},
           {"k", cfg.k},
           {"n", cfg.n},
           {"sigma", cfg.kernel.sigma},
           {"seed", cfg.seed},
           {"created_at", utc_now()},
           {"rounds", Json::array()}};
  const auto m = train_and_store(id + "-r0", name, spec, {});
  doc["rounds"].push_back(make_round(*ds, *m, 0, doc));
  persist(cfg_.data_dir / "sessions" / (id + ".json"), doc);
  auto state = std::make_shared<SessionState>();
  state->doc = doc;
  std::unique_lock lock(mutex_);
  sessions_[id] = std::move(state);
  return doc;
}

std::unique_lock<std::mutex> Service::hold_session(const std::string& session_id) {
  return std::unique_lock<std::mutex>(session(session_id)->write_guard);
}

Json Service::add_round(const std::string& session_id, const Json& req) {
  const auto state = session(session_id);
  std::unique_lock guard(state->write_guard, std::try_to_lock);
  if (!guard.owns_lock()) {
    throw Error(ErrorKind::kCollision, "a round for session '" + session_id + "' is already in flight");
  }
  Json doc;
  {
    std::shared_lock lock(mutex_);
    doc = state->doc;
  }
  const auto ds = dataset(doc.at("dataset").get<std::string>());
  std::vector<std::string> words;
  if (req.contains("remove_words")) {
    if (!req.at("remove_words").is_array()) throw Error(ErrorKind::kConfig, "remove_words must be a list");
    for (const auto& w : req.at("remove_words")) {
      if (!w.is_string()) throw Error(ErrorKind::kConfig, "remove_words must hold strings");
      words.push_back(w.get<std::string>());
    }
  }
  for (const auto& w : words) {
    if (!ds->vocab.contains(w)) throw Error(ErrorKind::kConfig, "unknown word '" + w + "'");
  }
  const auto& last = doc.at("rounds").back();
  std::set<std::string> removed;
  for (const auto& w : last.at("removed_words_cumulative")) removed.insert(w.get<std::string>());
  removed.insert(words.begin(), words.end());

  const std::size_t index = doc.at("rounds").size();
  const auto spec = ModelSpec::from_json(doc.at("model_spec"));
  const auto m = train_and_store(session_id + "-r" + std::to_string(index), ds->corpus.name, spec,
                                 std::vector<std::string>(removed.begin(), removed.end()));
  auto round = make_round(*ds, *m, index, doc);
  doc["rounds"].push_back(round);
  persist(cfg_.data_dir / "sessions" / (session_id + ".json"), doc);
  std::unique_lock lock(mutex_);
  state->doc = std::move(doc);
  return round;
}

Json Service::get_session(const std::string& session_id) const {
  const auto state = session(session_id);
  std::shared_lock lock(mutex_);
  return state->doc;
}

Response Service::handle(const std::string& method, const std::string& path, const std::string& body) {
  try {
    const auto parts = split_path(path);
    if (parts.size() < 2 || parts[0] != "api") return error_response(404, "NotFound", "no route " + path);
    Json req = Json::object();
    if (method == "POST" && !body.empty()) {
      try {
        req = Json::parse(body);
      } catch (const Json::parse_error& e) {
        return error_response(400, "ParseError", e.what());
      }
      if (!req.is_object()) return error_response(422, "SchemaError", "request body must be a JSON object");
    }
    // Route shape: resource plus positional markers, e.g. "models/:/explain".
    std::string shape = parts[1];
    for (std::size_t i = 2; i < parts.size(); ++i) shape += i == 2 ? "/:" : "/" + parts[i];
    static const std::map<std::string, std::string> kRoutes{
        {"datasets", "GET"},         {"models", "POST"},   {"models/:", "GET"},
        {"models/:/explain", "POST"}, {"models/:/pick", "POST"}, {"sessions", "POST"},
        {"sessions/:", "GET"},        {"sessions/:/rounds", "POST"}};
    const auto route = kRoutes.find(shape);
    if (route == kRoutes.end()) return error_response(404, "NotFound", "no route " + path);
    if (route->second != method) return error_response(405, "MethodNotAllowed", method + " " + path);

    if (shape == "datasets") return {200, list_datasets()};
    if (shape == "models") return {201, create_model(req)};
    if (shape == "models/:") {
      const auto m = model(parts[2]);
      return {200,
              {{"model_id", m->id},
               {"dataset", m->dataset},
               {"spec", m->spec.to_json()},
               {"removed_words", m->removed_words},
               {"metrics", m->metrics},
               {"model_hash", m->model_hash}}};
    }
    if (shape == "models/:/explain") return {200, explain(parts[2], req)};
    if (shape == "models/:/pick") return {200, pick(parts[2], req)};
    if (shape == "sessions") return {201, create_session(req)};
    if (shape == "sessions/:") return {200, get_session(parts[2])};
    return {201, add_round(parts[2], req)};
  } catch (const Error& e) {
    return error_response(status_for(e.kind()), to_string(e.kind()), e.what());
  } catch (const Json::exception& e) {
    return error_response(422, "SchemaError", e.what());
  } catch (const std::exception& e) {
    return error_response(500, "InternalError", e.what());
  }
}

void serve(Service& service, const std::string& host, int port) {
  httplib::Server server;
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  auto route = [&service](const httplib::Request& req, httplib::Response& res) {
    const auto out = service.handle(req.method, req.path, req.body);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  };
  server.Get(".*", route);
  server.Post(".*", route);
  if (!server.listen(host, port)) throw Error(ErrorKind::kIo, "cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace locex::service
