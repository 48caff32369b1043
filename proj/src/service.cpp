#include "kge/service.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <optional>
#include <thread>

#include "kge/error.hpp"
#include "kge/explain.hpp"
#include "kge/knowledge.hpp"
#include "kge/projection.hpp"
#include "kge/version.hpp"
// After the Eigen headers: <resolv.h> defines a _res macro that collides with them.
#include "httplib.h"

namespace kge {

using nlohmann::json;

namespace {

constexpr const char* kStateFormat = "kge-session-1";

// Transport-level failure with an explicit status; everything else is mapped
// from kge::Error codes.
struct HttpError : std::runtime_error {
  HttpError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status(status), code(std::move(code)) {}
  int status;
  std::string code;
};

HttpResponse reply(int status, const json& body) { return {status, body.dump()}; }

HttpResponse error_reply(int status, std::string_view code, std::string_view message) {
  return reply(status, json{{"error", code}, {"message", message}});
}

int status_for(Errc code) {
  switch (code) {
    case Errc::ParseError:
    case Errc::SchemaMismatch:
    case Errc::ConfigError:
    case Errc::InvalidHyperparams:
    case Errc::AlphaOutOfRange:
      return 400;
    default:
      return 422;
  }
}

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    const std::size_t j = path.find('/', i);
    const std::size_t end = j == std::string_view::npos ? path.size() : j;
    if (end > i) out.emplace_back(path.substr(i, end - i));
    i = end;
  }
  return out;
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  json j = json::parse(body);  // json::parse_error -> 400
  if (!j.is_object()) throw HttpError(400, "BadRequest", "request body must be a JSON object");
  return j;
}

template <class T>
T field(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw HttpError(400, "BadRequest", std::string("field '") + key + "' has the wrong type");
  }
}

template <class T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw HttpError(400, "BadRequest", std::string("missing field '") + key + "'");
  return field<T>(j, key, T{});
}

std::optional<std::string> query(const HttpRequest& req, const std::string& key) {
  auto it = req.query.find(key);
  if (it == req.query.end()) return std::nullopt;
  return it->second;
}

std::uint64_t query_uint(const HttpRequest& req, const std::string& key, std::uint64_t fallback) {
  auto v = query(req, key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || p != v->data() + v->size())
    throw HttpError(400, "BadRequest", "query parameter '" + key + "' must be a non-negative integer");
  return out;
}

Polygon polygon_from_json(const json& j) {
  if (!j.is_array()) throw HttpError(400, "BadRequest", "polygon must be an array of [x, y] pairs");
  Polygon poly;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw HttpError(400, "BadRequest", "polygon vertices must be [x, y] number pairs");
    poly.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  return poly;
}

json polygon_to_json(const Polygon& poly) {
  json out = json::array();
  for (const auto& [x, y] : poly) out.push_back({x, y});
  return out;
}

json report_to_json(const LossReport& r) {
  return {{"epoch", r.epoch}, {"recon", r.recon}, {"cls", r.cls}, {"total", r.total}, {"trainAccuracy", r.train_accuracy}};
}

struct Selection {
  std::string name;
  Polygon polygon;
  std::vector<std::size_t> samples;
};

enum class JobStatus { Idle, Running, Done, Failed, Cancelled };

const char* status_name(JobStatus s) {
  switch (s) {
    case JobStatus::Idle: return "idle";
    case JobStatus::Running: return "running";
    case JobStatus::Done: return "done";
    case JobStatus::Failed: return "failed";
    case JobStatus::Cancelled: return "cancelled";
  }
  return "idle";
}

}  // namespace

struct Session {
  Session(std::string id, Dataset data, const Hyperparams& defaults)
      : id(std::move(id)), ds(std::move(data)), features(normalize_features(ds)), tree(ds.n()), hp(defaults) {}

  ~Session() {
    cancel = true;
    if (worker.joinable()) worker.join();
  }

  const std::string id;
  const Dataset ds;
  const FeatureMatrix features;

  std::mutex mu;  // guards everything below
  std::uint64_t version = 1;
  KnowledgeTree tree;
  Hyperparams hp;

  // Latest model (published every epoch while training) and the rows it was
  // trained on; the projection covers exactly those rows.
  std::shared_ptr<const EmbeddingModel> model;
  std::shared_ptr<const LabelAssignment> model_labels;
  std::vector<std::size_t> model_rows;
  std::shared_ptr<const Projection> projection;
  std::vector<Selection> selections;  // at most two, in creation order

  JobStatus status = JobStatus::Idle;
  std::size_t job_epochs = 0;
  std::vector<LossReport> reports;
  std::string job_error;
  std::atomic<bool> cancel{false};
  std::thread worker;

  bool running() const { return status == JobStatus::Running; }

  void check_version(const json& body) const {
    if (body.contains("version") && !body.at("version").is_null()) {
      const auto v = field<std::uint64_t>(body, "version", 0);
      if (v != version)
        throw HttpError(409, "StaleVersion",
                        "version " + std::to_string(v) + " is stale; current is " + std::to_string(version));
    }
  }

  void reject_if_running() const {
    if (running()) throw HttpError(409, "JobRunning", "a training job is running for this session");
  }

  // A tree change invalidates everything derived from the old labels.
  void reset_derivatives() {
    model.reset();
    model_labels.reset();
    model_rows.clear();
    projection.reset();
    selections.clear();
    reports.clear();
    status = JobStatus::Idle;
    job_error.clear();
  }

  const Selection* selection(const std::string& name) const {
    for (const auto& s : selections)
      if (s.name == name) return &s;
    return nullptr;
  }

  json classes_json() const {
    json out = json::array();
    LabelAssignment la;
    try {
      la = derive_labels(tree, ds);
    } catch (const Error&) {
      return out;  // no valid classes left
    }
    for (std::size_t c = 0; c < la.num_classes(); ++c) {
      const auto& nd = tree.node(la.class_nodes[c]);
      out.push_back({{"class", c}, {"node", nd.id}, {"color", nd.color}, {"size", la.class_sizes[c]}});
    }
    return out;
  }

  json tree_json() const { return {{"version", version}, {"tree", tree.to_json()}, {"classes", classes_json()}}; }

  json job_json() const {
    json reps = json::array();
    for (const auto& r : reports) reps.push_back(report_to_json(r));
    json j = {{"status", status_name(status)},
              {"epoch", reports.empty() ? 0 : reports.back().epoch + 1},
              {"epochs", job_epochs},
              {"reports", reps},
              {"modelStep", model ? model->step : 0},
              {"version", version}};
    if (!reports.empty()) {
      j["recon"] = reports.back().recon;
      j["cls"] = reports.back().cls;
      j["total"] = reports.back().total;
      j["trainAccuracy"] = reports.back().train_accuracy;
    }
    if (!job_error.empty()) j["error"] = job_error;
    return j;
  }

  json selections_json() const {
    json out = json::array();
    for (const auto& s : selections)
      out.push_back({{"name", s.name}, {"polygon", polygon_to_json(s.polygon)}, {"samples", s.samples}});
    return out;
  }

  json state_json() const {
    return {{"format", kStateFormat}, {"tree", tree.to_json()}, {"hyperparams", hp.to_json()}, {"selections", selections_json()}};
  }
};

namespace {

Hyperparams train_params(const json& body, Hyperparams hp) {
  if (body.contains("clrPercent")) hp.alpha = Hyperparams::alpha_from_clr_percent(field<double>(body, "clrPercent", 0.0));
  hp.epochs = field<std::size_t>(body, "epochs", hp.epochs);
  hp.eta = field<double>(body, "eta", hp.eta);
  hp.batch_size = field<std::size_t>(body, "batch", hp.batch_size);
  hp.embed_dim = field<std::size_t>(body, "embedDim", hp.embed_dim);
  hp.hidden_dim = field<std::size_t>(body, "hiddenDim", hp.hidden_dim);
  hp.seed = field<std::uint64_t>(body, "seed", hp.seed);
  if (!(hp.alpha >= 0.0 && hp.alpha <= 1.0))
    throw Error(Errc::AlphaOutOfRange, "clrPercent must lie in [0, 100]");
  hp.validate();
  return hp;
}

BinSet bins_from_body(const Dataset& ds, const KnowledgeTree& tree, int node, const json& body) {
  const auto attr = body.contains("attribute") ? required<std::string>(body, "attribute") : required<std::string>(body, "attr");
  if (body.contains("edges")) return discretize_with_edges(ds, attr, required<std::vector<double>>(body, "edges"));
  const auto rows = tree.support(ds, node);
  return discretize(ds, attr, required<int>(body, "resolution"), rows);
}

struct Route {
  std::string method;
  std::vector<std::string> parts;  // after /sessions/{id}
};

}  // namespace

Service::Service(ServiceConfig config) : config_(std::move(config)) {}

Service::~Service() = default;

std::shared_ptr<Session> Service::find(const std::string& id) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw HttpError(404, "UnknownSession", "no session '" + id + "'");
  return it->second;
}

namespace {

HttpResponse not_found(const HttpRequest& req) {
  return error_reply(404, "NotFound", "no resource at " + req.path);
}

HttpResponse method_not_allowed(const HttpRequest& req) {
  return error_reply(405, "MethodNotAllowed", req.method + " is not supported on " + req.path);
}

// --- per-session handlers; each takes the session and the request ---------

HttpResponse get_attributes(Session& s) {
  json out = json::array();
  for (const auto& spec : s.ds.schema()) out.push_back(summary_to_json(spec, attribute_summary(s.ds, spec.name)));
  return reply(200, out);
}

HttpResponse tree_edit(Session& s, const std::string& op, const json& body) {
  std::lock_guard lock(s.mu);
  s.check_version(body);
  s.reject_if_running();
  KnowledgeTree next;
  if (op == "create" || op == "refine") {
    const int node = field<int>(body, "node", 0);
    s.tree.node(node);  // InvalidNode before binning
    const BinSet bins = bins_from_body(s.ds, s.tree, node, body);
    const auto btg = required<std::vector<int>>(body, "binToGroup");
    next = op == "create" ? create_classes(s.tree, s.ds, node, bins, btg) : refine_class(s.tree, s.ds, node, bins, btg);
  } else {
    next = delete_class(s.tree, required<int>(body, "node"));
  }
  s.tree = std::move(next);
  s.reset_derivatives();
  ++s.version;
  return reply(200, s.tree_json());
}

HttpResponse tree_suggest(Session& s, const json& body) {
  KnowledgeTree tree;
  {
    std::lock_guard lock(s.mu);
    tree = s.tree;
  }
  const int node = field<int>(body, "node", 0);
  tree.node(node);
  const BinSet bins = bins_from_body(s.ds, tree, node, body);
  std::vector<std::string> grouping;
  if (body.contains("groupingAttributes")) {
    grouping = required<std::vector<std::string>>(body, "groupingAttributes");
  } else {
    for (auto c : s.ds.embedding_columns()) grouping.push_back(s.ds.schema()[c].name);
  }
  const auto rows = tree.support(s.ds, node);
  const auto features = group_features(s.ds, bins, grouping, rows);
  const auto k = required<int>(body, "K");
  const auto assignment = suggest_grouping(features, k, field<std::uint64_t>(body, "seed", 0));
  // Empty bins get no feature; they are suggested as filtered.
  std::vector<int> btg(bins.size(), -1);
  for (std::size_t f = 0; f < features.size(); ++f) btg[features[f].bin] = assignment[f];
  json labels = json::array();
  for (std::size_t b = 0; b < bins.size(); ++b) labels.push_back(bins.label(b));
  return reply(200, json{{"bins", binset_to_json(bins)}, {"labels", labels}, {"binToGroup", btg}, {"counts", bin_counts(s.ds, bins, rows)}});
}

HttpResponse train_start(Session& s, const json& body) {
  std::unique_lock lock(s.mu);
  s.check_version(body);
  s.reject_if_running();
  const Hyperparams hp = train_params(body, s.hp);
  auto labels = std::make_shared<const LabelAssignment>(derive_labels(s.tree, s.ds));
  // Refuse synchronously what train() would reject on the worker.
  if (hp.batch_size > labels->active_count)
    throw Error(Errc::InvalidHyperparams, "batch size " + std::to_string(hp.batch_size) + " exceeds " +
                                              std::to_string(labels->active_count) + " active samples");

  EmbeddingModel start;
  const bool warm = field<bool>(body, "warmStart", false);
  if (warm && s.model && s.model->hp.embed_dim == hp.embed_dim && s.model->hp.hidden_dim == hp.hidden_dim) {
    start = *s.model;
    start.hp = hp;
  } else {
    start = init_model(s.ds.n(), s.ds.d(), hp);
  }

  if (s.worker.joinable()) s.worker.join();  // previous job already finished
  s.hp = hp;
  s.status = JobStatus::Running;
  s.job_epochs = hp.epochs;
  s.reports.clear();
  s.job_error.clear();
  s.cancel = false;
  s.model = std::make_shared<const EmbeddingModel>(start);
  s.model_labels = labels;
  s.model_rows = labels->active_rows();
  s.projection.reset();
  s.selections.clear();
  ++s.version;

  Session* self = &s;
  s.worker = std::thread([self, start = std::move(start), labels, hp]() mutable {
    JobStatus outcome = JobStatus::Done;
    std::string error;
    std::shared_ptr<const EmbeddingModel> final_model;
    try {
      auto result = train(std::move(start), self->features, *labels, hp, [self](const LossReport& r, const EmbeddingModel& m) {
        auto snapshot = std::make_shared<const EmbeddingModel>(m);
        std::lock_guard g(self->mu);
        self->reports.push_back(r);
        self->model = std::move(snapshot);
        return !self->cancel.load();
      });
      final_model = std::make_shared<const EmbeddingModel>(std::move(result.model));
    } catch (const Error& e) {
      outcome = e.code() == Errc::Cancelled ? JobStatus::Cancelled : JobStatus::Failed;
      if (outcome == JobStatus::Failed) error = e.what();
    } catch (const std::exception& e) {
      outcome = JobStatus::Failed;
      error = e.what();
    }
    std::lock_guard g(self->mu);
    if (final_model) self->model = std::move(final_model);
    self->status = outcome;
    self->job_error = std::move(error);
    ++self->version;
  });
  return reply(202, s.job_json());
}

HttpResponse train_cancel(Session& s) {
  std::thread worker;
  {
    std::lock_guard lock(s.mu);
    if (!s.running()) throw HttpError(409, "NoJob", "no training job is running");
    s.cancel = true;
    worker = std::move(s.worker);
  }
  if (worker.joinable()) worker.join();
  std::lock_guard lock(s.mu);
  return reply(200, s.job_json());
}

json projection_json(const Session& s, const Projection& p, const std::vector<std::size_t>& rows,
                     const LabelAssignment& labels, const KnowledgeTree& tree) {
  json j = p.to_json();
  json colors = json::array();
  json classes = json::array();
  for (auto r : rows) {
    const auto& y = labels.labels[r];
    classes.push_back(y ? json(*y) : json(nullptr));
    colors.push_back(y ? json(tree.node(labels.class_nodes[static_cast<std::size_t>(*y)]).color) : json(nullptr));
  }
  j["samples"] = rows;
  j["classes"] = classes;
  j["colors"] = colors;
  j["version"] = s.version;
  return j;
}

HttpResponse get_projection(Session& s, const HttpRequest& req) {
  const auto method = parse_method(query(req, "method").value_or("neighbor"));
  const auto seed = query_uint(req, "seed", 0);
  ProjectionParams params;
  params.neighbors = static_cast<int>(query_uint(req, "neighbors", static_cast<std::uint64_t>(params.neighbors)));
  params.iterations = static_cast<int>(query_uint(req, "iterations", static_cast<std::uint64_t>(params.iterations)));

  std::shared_ptr<const EmbeddingModel> model;
  std::shared_ptr<const LabelAssignment> labels;
  std::vector<std::size_t> rows;
  KnowledgeTree tree;
  {
    std::lock_guard lock(s.mu);
    if (!s.model) throw HttpError(409, "NoModel", "train a model before projecting");
    const auto& cached = s.projection;
    if (cached && cached->method == method && cached->seed == seed && cached->model_step == s.model->step &&
        cached->params.neighbors == params.neighbors && cached->params.iterations == params.iterations)
      return reply(200, projection_json(s, *cached, s.model_rows, *s.model_labels, s.tree));
    model = s.model;
    labels = s.model_labels;
    rows = s.model_rows;
    tree = s.tree;
  }

  Eigen::MatrixXd H(static_cast<Eigen::Index>(rows.size()), model->H.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) H.row(static_cast<Eigen::Index>(i)) = model->H.row(static_cast<Eigen::Index>(rows[i]));
  if (method == ProjectionMethod::Neighbor && rows.size() > 2)
    params.neighbors = std::min<int>(params.neighbors, static_cast<int>(rows.size()) - 1);
  auto proj = std::make_shared<Projection>(project(H, method, params, seed));
  proj->model_step = model->step;

  std::lock_guard lock(s.mu);
  // Only publish when the session has not moved on in the meantime.
  if (s.model == model) {
    s.projection = proj;
    // Old selections were drawn on another layout; their sample sets stay valid.
  }
  return reply(200, projection_json(s, *proj, rows, *labels, tree));
}

HttpResponse post_selection(Session& s, const json& body) {
  const auto name = required<std::string>(body, "name");
  if (name.empty()) throw HttpError(400, "BadRequest", "selection name must not be empty");
  const Polygon poly = polygon_from_json(body.contains("polygon") ? body.at("polygon") : json());
  std::lock_guard lock(s.mu);
  s.check_version(body);
  if (!s.projection) throw HttpError(409, "NoProjection", "request a projection before selecting");
  const bool replace = s.selection(name) != nullptr;
  if (!replace && s.selections.size() >= 2)
    throw Error(Errc::InvalidArgument, "at most two selections; delete one first");
  std::vector<std::size_t> samples;
  for (auto i : lasso_select(*s.projection, poly)) samples.push_back(s.model_rows[i]);
  if (replace) {
    for (auto& sel : s.selections)
      if (sel.name == name) sel = Selection{name, poly, samples};
  } else {
    s.selections.push_back(Selection{name, poly, samples});
  }
  ++s.version;
  return reply(replace ? 200 : 201, json{{"name", name}, {"samples", samples}, {"version", s.version}});
}

HttpResponse delete_selection(Session& s, const std::string& name, const HttpRequest& req) {
  std::lock_guard lock(s.mu);
  if (auto v = query(req, "version")) s.check_version(json{{"version", query_uint(req, "version", 0)}});
  auto it = std::find_if(s.selections.begin(), s.selections.end(), [&](const Selection& sel) { return sel.name == name; });
  if (it == s.selections.end()) throw HttpError(404, "UnknownSelection", "no selection '" + name + "'");
  s.selections.erase(it);
  ++s.version;
  return reply(200, json{{"version", s.version}, {"selections", s.selections_json()}});
}

// Snapshot for explain/histogram: factor matrix inputs and the comparison.
struct ExplainInput {
  KnowledgeTree tree;
  Comparison cmp;
};

ExplainInput explain_input(Session& s, const HttpRequest& req) {
  const auto mode = query(req, "mode").value_or("pair");
  if (mode != "pair" && mode != "rest") throw HttpError(400, "BadRequest", "mode must be 'pair' or 'rest'");
  std::lock_guard lock(s.mu);
  auto pick = [&](const char* key, std::size_t fallback) -> const Selection& {
    if (auto name = query(req, key)) {
      if (const auto* sel = s.selection(*name)) return *sel;
      throw HttpError(404, "UnknownSelection", "no selection '" + *name + "'");
    }
    if (fallback >= s.selections.size()) throw Error(Errc::EmptySelection, std::string("selection ") + key + " is not set");
    return s.selections[fallback];
  };
  const Selection& a = pick("a", 0);
  const bool rest = mode == "rest";
  std::vector<std::size_t> b;
  if (!rest) b = pick("b", 1).samples;
  const auto& active = s.model_rows.empty() ? derive_labels(s.tree, s.ds).active_rows() : s.model_rows;
  return {s.tree, make_comparison(a.samples, b, rest, active)};
}

HttpResponse get_explain(Session& s, const HttpRequest& req) {
  const auto kind = parse_kind(query(req, "kind").value_or("EF"));
  ExplainOptions opt;
  opt.shap.seed = query_uint(req, "seed", 0);
  opt.shap.coalitions = query_uint(req, "coalitions", 0);
  opt.shap.exact = query(req, "exact").value_or("false") == "true";
  const auto in = explain_input(s, req);
  const auto fm = factor_matrix(s.ds, in.tree, kind);
  const auto result = explain(fm, in.cmp, opt);
  json j = result.to_json();
  j["seed"] = opt.shap.seed;
  j["mode"] = in.cmp.one_vs_rest ? "rest" : "pair";
  return reply(200, j);
}

HttpResponse get_histogram(Session& s, const HttpRequest& req) {
  const auto name = query(req, "factor");
  if (!name) throw HttpError(400, "BadRequest", "missing query parameter 'factor'");
  const auto kind = parse_kind(query(req, "kind").value_or("EF"));
  const auto bins = query_uint(req, "bins", 20);
  const auto in = explain_input(s, req);
  const auto fm = factor_matrix(s.ds, in.tree, kind);
  const auto h = histogram(fm, fm.set.index_of(*name), in.cmp, bins);
  json j = h.to_json();
  j["factor"] = *name;
  j["kind"] = kind_name(kind);
  j["overlap"] = h.overlap();
  return reply(200, j);
}

HttpResponse get_state(Session& s) {
  std::lock_guard lock(s.mu);
  return reply(200, s.state_json());
}

HttpResponse put_state(Session& s, const HttpRequest& req, const json& body) {
  if (field<std::string>(body, "format", "") != kStateFormat)
    throw HttpError(400, "BadRequest", std::string("state format must be '") + kStateFormat + "'");
  KnowledgeTree tree = KnowledgeTree::from_json(required<json>(body, "tree"));
  if (tree.sample_count() != s.ds.n())
    throw Error(Errc::InvalidArgument, "tree covers " + std::to_string(tree.sample_count()) + " samples, dataset has " +
                                           std::to_string(s.ds.n()));
  Hyperparams hp = Hyperparams::from_json(required<json>(body, "hyperparams"));
  hp.validate();
  std::vector<Selection> sels;
  const json jsel = field<json>(body, "selections", json::array());
  if (!jsel.is_array() || jsel.size() > 2) throw Error(Errc::InvalidArgument, "at most two selections");
  std::vector<bool> active(s.ds.n(), false);
  {
    LabelAssignment la;
    try {
      la = derive_labels(tree, s.ds);
    } catch (const Error&) {
    }
    for (auto r : la.active_rows()) active[r] = true;
  }
  for (const auto& js : jsel) {
    Selection sel{required<std::string>(js, "name"), polygon_from_json(field<json>(js, "polygon", json::array())),
                  required<std::vector<std::size_t>>(js, "samples")};
    for (auto r : sel.samples)
      if (r >= s.ds.n() || !active[r]) throw Error(Errc::InvalidArgument, "selection '" + sel.name + "' has inactive sample " + std::to_string(r));
    if (std::any_of(sels.begin(), sels.end(), [&](const Selection& o) { return o.name == sel.name; }))
      throw Error(Errc::InvalidArgument, "duplicate selection '" + sel.name + "'");
    sels.push_back(std::move(sel));
  }

  std::lock_guard lock(s.mu);
  if (auto v = query(req, "version")) s.check_version(json{{"version", query_uint(req, "version", 0)}});
  s.reject_if_running();
  s.tree = std::move(tree);
  s.reset_derivatives();
  s.hp = hp;
  s.selections = std::move(sels);
  ++s.version;
  return reply(200, json{{"version", s.version}});
}

HttpResponse session_info(Session& s) {
  std::lock_guard lock(s.mu);
  json attrs = json::array();
  for (const auto& spec : s.ds.schema()) attrs.push_back(spec.name);
  json descriptive = json::array();
  for (auto c : s.ds.descriptive_columns()) descriptive.push_back(s.ds.schema()[c].name);
  return reply(200, json{{"id", s.id},
                         {"version", s.version},
                         {"samples", s.ds.n()},
                         {"embeddingDims", s.ds.d()},
                         {"attributes", attrs},
                         {"descriptive", descriptive},
                         {"job", status_name(s.status)}});
}

}  // namespace

HttpResponse Service::handle(const HttpRequest& req) {
  try {
    if (req.body.size() > config_.max_body_bytes) return error_reply(413, "PayloadTooLarge", "request body exceeds the limit");
    const auto parts = split_path(req.path);
    const std::string& m = req.method;

    if (parts.empty()) return not_found(req);
    if (parts.size() == 1 && parts[0] == "version") {
      if (m != "GET") return method_not_allowed(req);
      return reply(200, json{{"version", kVersion}});
    }
    if (parts[0] != "sessions") return not_found(req);

    if (parts.size() == 1) {
      if (m == "GET") {
        std::lock_guard lock(mu_);
        json ids = json::array();
        for (const auto& [id, _] : sessions_) ids.push_back(id);
        return reply(200, json{{"sessions", ids}});
      }
      if (m != "POST") return method_not_allowed(req);
      const json body = parse_body(req.body);
      const auto csv = required<std::string>(body, "csv");
      const json& js = body.contains("schema") ? body.at("schema") : json();
      const Schema schema = js.is_string() ? parse_schema(js.get<std::string>()) : schema_from_json(js);
      Dataset ds = load_dataset(csv, schema);
      if (ds.n() > config_.max_rows)
        return error_reply(413, "TooManyRows",
                           std::to_string(ds.n()) + " rows exceed the limit of " + std::to_string(config_.max_rows));
      std::shared_ptr<Session> session;
      {
        std::lock_guard lock(mu_);
        if (sessions_.size() >= config_.max_sessions) return error_reply(429, "TooManySessions", "session limit reached");
        const std::string id = "s" + std::to_string(next_id_++);
        session = std::make_shared<Session>(id, std::move(ds), config_.defaults);
        sessions_.emplace(id, session);
      }
      json descriptive = json::array();
      for (auto c : session->ds.descriptive_columns()) descriptive.push_back(session->ds.schema()[c].name);
      return reply(201, json{{"id", session->id},
                             {"version", 1},
                             {"samples", session->ds.n()},
                             {"embeddingDims", session->ds.d()},
                             {"descriptive", descriptive}});
    }

    auto session = find(parts[1]);
    Session& s = *session;
    const std::vector<std::string> rest(parts.begin() + 2, parts.end());

    if (rest.empty()) {
      if (m == "GET") return session_info(s);
      if (m == "DELETE") {
        {
          std::lock_guard lock(mu_);
          sessions_.erase(s.id);
        }
        return reply(200, json{{"deleted", s.id}});
      }
      return method_not_allowed(req);
    }

    const std::string& res = rest[0];
    if (res == "attributes" && rest.size() == 1) {
      if (m != "GET") return method_not_allowed(req);
      return get_attributes(s);
    }
    if (res == "tree") {
      if (rest.size() == 1) {
        if (m != "GET") return method_not_allowed(req);
        std::lock_guard lock(s.mu);
        return reply(200, s.tree_json());
      }
      if (rest.size() == 2) {
        const auto& op = rest[1];
        if (op != "create" && op != "refine" && op != "delete" && op != "suggest") return not_found(req);
        if (m != "POST") return method_not_allowed(req);
        const json body = parse_body(req.body);
        return op == "suggest" ? tree_suggest(s, body) : tree_edit(s, op, body);
      }
      return not_found(req);
    }
    if (res == "train" && rest.size() == 1) {
      if (m == "POST") return train_start(s, parse_body(req.body));
      if (m == "GET") {
        std::lock_guard lock(s.mu);
        return reply(200, s.job_json());
      }
      if (m == "DELETE") return train_cancel(s);
      return method_not_allowed(req);
    }
    if (res == "projection" && rest.size() == 1) {
      if (m != "GET") return method_not_allowed(req);
      return get_projection(s, req);
    }
    if (res == "selections") {
      if (rest.size() == 1) {
        if (m == "POST") return post_selection(s, parse_body(req.body));
        if (m == "GET") {
          std::lock_guard lock(s.mu);
          return reply(200, json{{"version", s.version}, {"selections", s.selections_json()}});
        }
        return method_not_allowed(req);
      }
      if (rest.size() == 2) {
        if (m != "DELETE") return method_not_allowed(req);
        return delete_selection(s, rest[1], req);
      }
      return not_found(req);
    }
    if (res == "explain" && rest.size() == 1) {
      if (m != "GET") return method_not_allowed(req);
      return get_explain(s, req);
    }
    if (res == "histogram" && rest.size() == 1) {
      if (m != "GET") return method_not_allowed(req);
      return get_histogram(s, req);
    }
    if (res == "state" && rest.size() == 1) {
      if (m == "GET") return get_state(s);
      if (m == "PUT") return put_state(s, req, parse_body(req.body));
      return method_not_allowed(req);
    }
    return not_found(req);
  } catch (const HttpError& e) {
    return error_reply(e.status, e.code, e.what());
  } catch (const json::exception& e) {
    return error_reply(400, "BadRequest", e.what());
  } catch (const Error& e) {
    return error_reply(status_for(e.code()), errc_name(e.code()), e.what());
  } catch (const std::exception& e) {
    return error_reply(500, "Internal", e.what());
  }
}

void Service::bind(httplib::Server& server) {
  server.set_payload_max_length(config_.max_body_bytes);
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  auto forward = [this](const httplib::Request& in, httplib::Response& out) {
    HttpRequest req{in.method, in.path, {}, in.body};
    for (const auto& [k, v] : in.params) req.query.emplace(k, v);
    const auto r = handle(req);
    out.status = r.status;
    out.set_content(r.body, "application/json");
  };
  server.Get(".*", forward);
  server.Post(".*", forward);
  server.Put(".*", forward);
  server.Delete(".*", forward);
  server.Options(".*", [](const httplib::Request&, httplib::Response& out) { out.status = 204; });
}

}  // namespace kge
