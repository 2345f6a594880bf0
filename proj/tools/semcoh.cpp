// semcoh: command-line front end for the whole pipeline.

#include <csignal>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "semcoh/semcoh.hpp"

namespace {

using namespace semcoh;

// Conventional study directory layout.
struct StudyPaths {
  fs::path root;

  fs::path corpus(const std::string& name) const { return root / "corpus" / name; }
  fs::path config() const { return root / "study.toml"; }
  fs::path tasks(TaskMode m) const { return root / "tasks" / (std::string(to_string(m)) + ".jsonl"); }
  fs::path public_tasks(TaskMode m) const { return root / "tasks" / (std::string(to_string(m)) + ".public.jsonl"); }
  fs::path log(TaskMode m) const { return root / "responses" / (std::string(to_string(m)) + ".log.jsonl"); }
  fs::path report(TaskMode m, const std::string& kind) const {
    return root / "reports" / (std::string(to_string(m)) + "." + kind);
  }
  fs::path descriptions() const { return root / "descriptions.jsonl"; }
};

void write_text(const fs::path& p, const std::string& text) {
  auto out = detail::open_output(p, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::io, "write failed: " + p.string());
}

/// `explicit_value` if given, else the study default, else an error.
fs::path pick(const std::string& explicit_value, const std::optional<StudyPaths>& study, const std::string& corpus_name,
              const char* flag) {
  if (!explicit_value.empty()) return explicit_value;
  if (study) return study->corpus(corpus_name);
  throw Error(ErrorCode::invalid_argument, std::string("missing ") + flag);
}

std::optional<StudyPaths> study_of(const std::string& dir) {
  if (dir.empty()) return std::nullopt;
  return StudyPaths{dir};
}

StudyPaths require_study(const std::string& dir) {
  if (dir.empty()) throw Error(ErrorCode::invalid_argument, "missing --study");
  if (!fs::is_directory(dir)) throw Error(ErrorCode::io, "study directory " + dir + " does not exist");
  return StudyPaths{dir};
}

/// Study settings that must agree between the snapshot and a task set. The
/// daily limit is per task set (describability sets default it to 1).
bool same_study(StudyConfig a, StudyConfig b) {
  a.rate_limit_per_class_per_day.reset();
  b.rate_limit_per_class_per_day.reset();
  return a == b;
}

/// Loads a study's task set and checks it against the study.toml snapshot.
TaskSet load_study_tasks(const StudyPaths& study, TaskMode mode) {
  if (!fs::exists(study.config())) throw Error(ErrorCode::missing, study.config().string() + " not found");
  const auto snapshot = load_study_config(study.config());
  if (!fs::exists(study.tasks(mode))) {
    throw Error(ErrorCode::missing, study.tasks(mode).string() + " not found; build the task set first");
  }
  auto ts = load_taskset(study.tasks(mode));
  if (!same_study(snapshot, ts.config)) {
    throw Error(ErrorCode::config_mismatch, "task set " + study.tasks(mode).string() + " does not match study.toml");
  }
  return ts;
}

void write_tasks(const StudyPaths& study, const TaskSet& ts, const std::string& command,
                 const std::vector<fs::path>& inputs) {
  write_taskset(study.tasks(ts.mode), ts, true);
  write_taskset(study.public_tasks(ts.mode), ts, false);
  write_provenance(study.tasks(ts.mode), command, ts.config.seed, inputs);
  write_provenance(study.public_tasks(ts.mode), command, ts.config.seed, inputs);
}

std::vector<Response> load_study_responses(const StudyPaths& study, const TaskSet& ts) {
  const auto path = study.log(ts.mode);
  if (!fs::exists(path)) return {};
  auto contents = read_log(path);
  if (contents.header != log_header(ts)) {
    throw Error(ErrorCode::config_mismatch, path.string() + " was recorded for a different task set");
  }
  return std::move(contents.responses);
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto v = detail::parse_int(detail::trim(item));
    if (!v || *v < 0) throw Error(ErrorCode::invalid_argument, "expected a list of non-negative integers: " + text);
    out.push_back(static_cast<std::size_t>(*v));
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error(ErrorCode::invalid_argument, "expected a list of numbers: " + text);
    }
  }
  return out;
}

void emit(const json& j, const std::string& out_path) {
  const auto text = j.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_text(out_path, text);
  }
}

std::string csv_number(const json& v) { return v.is_null() ? "" : v.dump(); }

volatile std::sig_atomic_t g_stop_requested = 0;
HttpStudyServer* g_server = nullptr;

void handle_signal(int) {
  g_stop_requested = 1;
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semcoh: semantic coherence and describability studies"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  std::uint64_t seed = 0;
  std::string study_dir;
  std::string out_path;

  // Shared corpus flags.
  std::string manifest_path, clustering_path, labels_path, label_names_path;
  std::string features_path, features_ids_path, captions_path, caption_emb_path, caption_emb_ids_path;
  bool clustering_header = false;

  auto add_study = [&](CLI::App* sub) { sub->add_option("--study", study_dir, "Study directory"); };
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", seed, "Random seed"); };
  auto add_clustering = [&](CLI::App* sub) {
    sub->add_option("--clustering", clustering_path, "Clustering CSV (image_id,cluster_id)");
    sub->add_flag("--clustering-header", clustering_header, "Clustering CSV has a header line");
  };
  auto add_features = [&](CLI::App* sub) {
    sub->add_option("--features", features_path, "Feature matrix (EMB1)");
    sub->add_option("--features-ids", features_ids_path, "Feature ids file");
  };
  auto add_labels = [&](CLI::App* sub) {
    sub->add_option("--labels", labels_path, "Label CSV (image_id,label_id)");
    sub->add_option("--label-names", label_names_path, "Label names CSV (label_id,name)");
  };
  auto add_captions = [&](CLI::App* sub) {
    sub->add_option("--captions", captions_path, "Caption JSONL");
    sub->add_option("--caption-emb", caption_emb_path, "Caption embeddings (EMB1)");
    sub->add_option("--caption-emb-ids", caption_emb_ids_path, "Caption embedding ids file");
  };

  // toy
  auto* toy_cmd = app.add_subcommand("toy", "Write the synthetic toy study (600 images, 20 clusters)");
  std::string toy_out;
  toy_cmd->add_option("--out", toy_out, "Study directory to create")->required();
  add_seed(toy_cmd);

  // validate
  auto* validate_cmd = app.add_subcommand("validate", "Check cross-file id consistency of a corpus");
  std::vector<std::string> require;
  add_study(validate_cmd);
  add_seed(validate_cmd);
  validate_cmd->add_option("--manifest", manifest_path, "Image manifest CSV");
  add_clustering(validate_cmd);
  add_labels(validate_cmd);
  add_features(validate_cmd);
  add_captions(validate_cmd);
  validate_cmd->add_option("--require", require, "Inputs needed downstream: manifest,features,captions,caption-embeddings")
      ->delimiter(',');
  validate_cmd->add_option("--out", out_path, "Write the report here instead of stdout");

  // metrics
  auto* metrics_cmd = app.add_subcommand("metrics", "Clustering metrics");
  metrics_cmd->require_subcommand(1);
  auto* purity_cmd = metrics_cmd->add_subcommand("purity", "Per-cluster label purity");
  add_study(purity_cmd);
  add_seed(purity_cmd);
  add_clustering(purity_cmd);
  add_labels(purity_cmd);
  purity_cmd->add_option("--out", out_path);
  auto* compare_cmd = metrics_cmd->add_subcommand("compare", "NMI, AMI and ARI between two clusterings");
  std::string compare_a, compare_b;
  compare_cmd->add_option("--a", compare_a)->required();
  compare_cmd->add_option("--b", compare_b)->required();
  compare_cmd->add_flag("--clustering-header", clustering_header);
  add_seed(compare_cmd);
  compare_cmd->add_option("--out", out_path);
  auto* hardneg_cmd = metrics_cmd->add_subcommand("hardneg", "Nearest-centroid hard negative per cluster");
  add_study(hardneg_cmd);
  add_seed(hardneg_cmd);
  add_clustering(hardneg_cmd);
  add_features(hardneg_cmd);
  hardneg_cmd->add_option("--out", out_path);
  auto* medoid_cmd = metrics_cmd->add_subcommand("medoid", "Most representative image (medoid) per cluster");
  std::optional<ClusterId> medoid_cluster;
  add_study(medoid_cmd);
  add_seed(medoid_cmd);
  add_clustering(medoid_cmd);
  add_features(medoid_cmd);
  medoid_cmd->add_option("--cluster", medoid_cluster, "Only this cluster");
  medoid_cmd->add_option("--out", out_path);

  // kmeans
  auto* kmeans_cmd = app.add_subcommand("kmeans", "Cluster embeddings with k-means (k-means++ seeding)");
  KMeansOptions km;
  add_study(kmeans_cmd);
  add_features(kmeans_cmd);
  add_seed(kmeans_cmd);
  kmeans_cmd->add_option("--k", km.k)->required();
  kmeans_cmd->add_option("--max-iter", km.max_iter);
  kmeans_cmd->add_option("--tol", km.tol);
  kmeans_cmd->add_flag("--normalize", km.normalize, "L2-normalize rows first");
  kmeans_cmd->add_option("--out", out_path, "Output clustering CSV")->required();

  // describe
  auto* describe_cmd = app.add_subcommand("describe", "Select one description per cluster from member captions");
  std::string describe_mode = "cosine", intra_divisor = "class-size", stats_out;
  bool no_negative = false;
  add_study(describe_cmd);
  add_seed(describe_cmd);
  add_clustering(describe_cmd);
  add_captions(describe_cmd);
  describe_cmd->add_option("--mode", describe_mode)->check(CLI::IsMember({"cosine", "rouge"}));
  describe_cmd->add_flag("--no-negative", no_negative, "Drop the inter-class term");
  describe_cmd->add_option("--intra-divisor", intra_divisor)->check(CLI::IsMember({"class-size", "excluding-self"}));
  describe_cmd->add_option("--out", out_path, "Description JSONL (default: <study>/descriptions.jsonl)");
  describe_cmd->add_option("--stats", stats_out, "Also write caption-uniqueness statistics here");

  // tasks
  auto* tasks_cmd = app.add_subcommand("tasks", "Generate HITs");
  tasks_cmd->require_subcommand(1);
  auto* build_cmd = tasks_cmd->add_subcommand("build", "Learnability HITs with random or hard negatives");
  std::optional<std::size_t> opt_reference, opt_hits, opt_annotators, opt_rate;
  std::optional<std::string> opt_negative, opt_study_id;
  std::optional<std::vector<ClusterId>> opt_classes;
  std::optional<std::uint64_t> opt_seed;
  build_cmd->add_option("--study", study_dir)->required();
  build_cmd->add_option("--seed", opt_seed, "Study seed (overrides study.toml)");
  build_cmd->add_option("--study-id", opt_study_id);
  build_cmd->add_option("--reference-size", opt_reference);
  build_cmd->add_option("--hits-per-class", opt_hits);
  build_cmd->add_option("--annotators", opt_annotators);
  build_cmd->add_option("--negative-mode", opt_negative)->check(CLI::IsMember({"random", "hard"}));
  build_cmd->add_option("--classes", opt_classes, "Selected cluster ids")->delimiter(',');
  build_cmd->add_option("--rate-limit", opt_rate, "Answers per worker, class and UTC day");
  auto* derive_cmd = tasks_cmd->add_subcommand("derive-desc", "Describability HITs from the learnability set");
  std::string descriptions_path;
  derive_cmd->add_option("--study", study_dir)->required();
  derive_cmd->add_option("--descriptions", descriptions_path);
  add_seed(derive_cmd);
  auto* rating_cmd = tasks_cmd->add_subcommand("rating", "Caption-quality rating HITs");
  rating_cmd->add_option("--study", study_dir)->required();
  rating_cmd->add_option("--descriptions", descriptions_path);
  add_seed(rating_cmd);

  std::string mode_name = "learnability";
  auto add_mode = [&](CLI::App* sub) {
    sub->add_option("--tasks", mode_name, "Task set: learnability, describability or rating")
        ->check(CLI::IsMember({"learnability", "describability", "rating"}));
  };

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the study service");
  int port = 8080;
  std::string host = "127.0.0.1", ui_dir;
  serve_cmd->add_option("--study", study_dir)->required();
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--ui", ui_dir, "Static annotator UI bundle served at /");
  add_mode(serve_cmd);
  add_seed(serve_cmd);

  // simulate
  auto* simulate_cmd = app.add_subcommand("simulate", "Synthetic annotators with a fixed accuracy");
  double accuracy = 0.9;
  bool force = false;
  simulate_cmd->add_option("--study", study_dir)->required();
  simulate_cmd->add_option("--p", accuracy, "Probability of choosing the positive")->check(CLI::Range(0.0, 1.0));
  simulate_cmd->add_flag("--force", force, "Overwrite an existing response log");
  add_mode(simulate_cmd);
  add_seed(simulate_cmd);

  // score / report
  auto* score_cmd = app.add_subcommand("score", "Per-class coherence, intervals and agreement");
  score_cmd->add_option("--study", study_dir)->required();
  score_cmd->add_option("--out", out_path);
  add_mode(score_cmd);
  add_seed(score_cmd);
  auto* report_cmd = app.add_subcommand("report", "Score report plus purity-binned aggregates (JSON and CSV)");
  std::string bins_text = "0,0.25,0.5,0.75,1";
  report_cmd->add_option("--study", study_dir)->required();
  report_cmd->add_option("--bins", bins_text, "Purity bin edges");
  add_mode(report_cmd);
  add_seed(report_cmd);

  // caption stats
  auto* capstats_cmd = app.add_subcommand("caption-stats", "Uniqueness of selected descriptions");
  std::size_t top_n = 10;
  capstats_cmd->add_option("--descriptions", descriptions_path)->required();
  capstats_cmd->add_option("--top", top_n);
  capstats_cmd->add_option("--out", out_path);
  add_seed(capstats_cmd);

  // retrieval-eval
  auto* retrieval_cmd = app.add_subcommand("retrieval-eval", "Top-k and binary-preference scores of retrieved images");
  std::string retrieval_input, subset_path, ks_text = "1,5";
  bool binary = false;
  std::size_t trials = 1;
  retrieval_cmd->add_option("--input", retrieval_input)->required();
  retrieval_cmd->add_option("--k", ks_text, "Comma-separated k values");
  retrieval_cmd->add_flag("--binary", binary, "Also compute binary preference");
  retrieval_cmd->add_option("--trials", trials, "Negatives drawn per positive");
  retrieval_cmd->add_option("--subset", subset_path, "File with one class id per line (reports R@k)");
  retrieval_cmd->add_option("--out", out_path);
  add_seed(retrieval_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (auto& ch : msg) {
      if (ch == '\n') ch = ' ';
    }
    std::cerr << "error: usage: " << msg << '\n';
    return 2;
  }

  try {
    const auto study = study_of(study_dir);

    if (*toy_cmd) {
      const auto toy = make_toy_corpus({.seed = seed ? seed : ToyOptions{}.seed});
      write_toy_study(toy_out, toy, toy_study_config(toy));
      std::cout << "wrote toy study to " << toy_out << '\n';
      return 0;
    }

    if (*validate_cmd) {
      CorpusBundle bundle;
      bundle.clustering = load_clustering(pick(clustering_path, study, "clustering.csv", "--clustering"), clustering_header);
      auto optional_path = [&](const std::string& given, const char* name) -> std::optional<fs::path> {
        if (!given.empty()) return fs::path(given);
        if (study && fs::exists(study->corpus(name))) return study->corpus(name);
        return std::nullopt;
      };
      if (auto p = optional_path(manifest_path, "manifest.csv")) bundle.manifest = load_manifest(*p);
      auto lp = optional_path(labels_path, "labels.csv");
      auto lnp = optional_path(label_names_path, "label_names.csv");
      if (lp && lnp) bundle.labels = load_labelmap(*lp, *lnp);
      auto fp = optional_path(features_path, "features.emb");
      auto fip = optional_path(features_ids_path, "features.ids");
      if (fp && fip) bundle.features = load_embeddings(*fp, *fip);
      if (auto p = optional_path(captions_path, "captions.jsonl")) bundle.captions = load_captions(*p);
      auto cp = optional_path(caption_emb_path, "caption_emb.emb");
      auto cip = optional_path(caption_emb_ids_path, "caption_emb.ids");
      if (cp && cip) bundle.caption_embeddings = load_embeddings(*cp, *cip);
      ValidationRequirements req;
      for (const auto& r : require) {
        if (r == "manifest") req.manifest = true;
        else if (r == "features") req.features = true;
        else if (r == "captions") req.captions = true;
        else if (r == "caption-embeddings") req.caption_embeddings = true;
        else throw Error(ErrorCode::invalid_argument, "unknown --require value " + r);
      }
      const auto report = validate_corpus(bundle, req);
      emit(report.to_json(), out_path);
      if (report.errors() > 0) {
        std::cerr << "error: validation: " << report.errors() << " consistency error(s)\n";
        return 1;
      }
      return 0;
    }

    if (*purity_cmd) {
      const auto clustering = load_clustering(pick(clustering_path, study, "clustering.csv", "--clustering"), clustering_header);
      const auto labels = load_labelmap(pick(labels_path, study, "labels.csv", "--labels"),
                                        pick(label_names_path, study, "label_names.csv", "--label-names"));
      emit(class_purity(clustering, labels).to_json(), out_path);
      return 0;
    }

    if (*compare_cmd) {
      const auto a = load_clustering(compare_a, clustering_header);
      const auto b = load_clustering(compare_b, clustering_header);
      const auto cmp = compare_clusterings(a, b);
      emit({{"nmi", cmp.nmi}, {"ami", cmp.ami}, {"ari", cmp.ari}, {"items", a.size()}}, out_path);
      return 0;
    }

    if (*hardneg_cmd || *medoid_cmd) {
      const auto clustering = load_clustering(pick(clustering_path, study, "clustering.csv", "--clustering"), clustering_header);
      const auto features = load_embeddings(pick(features_path, study, "features.emb", "--features"),
                                            pick(features_ids_path, study, "features.ids", "--features-ids"));
      if (*hardneg_cmd) {
        emit(centroids_and_hard_negatives(clustering, features).to_json(), out_path);
        return 0;
      }
      json out = json::array();
      std::vector<ClusterId> targets = medoid_cluster ? std::vector<ClusterId>{*medoid_cluster}
                                                      : clustering.sorted_cluster_ids();
      for (auto c : targets) {
        out.push_back({{"cluster_id", c}, {"image_id", representative_image(c, clustering, features)}});
      }
      emit({{"medoids", out}}, out_path);
      return 0;
    }

    if (*kmeans_cmd) {
      const fs::path fpath = pick(features_path, study, "features.emb", "--features");
      const fs::path ipath = pick(features_ids_path, study, "features.ids", "--features-ids");
      km.seed = seed;
      const auto result = kmeans(load_embeddings(fpath, ipath), km);
      write_clustering(out_path, result.clustering);
      write_provenance(out_path, "kmeans", seed, {fpath, ipath},
                       {{"k", km.k}, {"iterations", result.iterations}, {"inertia", result.inertia()}});
      std::cout << json{{"k", km.k}, {"iterations", result.iterations}, {"inertia", result.inertia()}}.dump() << '\n';
      return 0;
    }

    if (*describe_cmd) {
      const fs::path clustering_file = pick(clustering_path, study, "clustering.csv", "--clustering");
      const fs::path captions_file = pick(captions_path, study, "captions.jsonl", "--captions");
      const auto clustering = load_clustering(clustering_file, clustering_header);
      const auto captions = load_captions(captions_file);
      SelectionOptions opt;
      opt.use_negative_term = !no_negative;
      opt.intra_divisor = intra_divisor == "excluding-self" ? IntraDivisor::excluding_self : IntraDivisor::class_size;
      std::vector<fs::path> inputs{clustering_file, captions_file};
      DescriptionSet descriptions;
      if (describe_mode == "rouge") {
        opt.distance = DistanceKind::rouge_l;
        descriptions = select_descriptions_rouge(captions, clustering, opt);
      } else {
        const fs::path emb = pick(caption_emb_path, study, "caption_emb.emb", "--caption-emb");
        const fs::path emb_ids = pick(caption_emb_ids_path, study, "caption_emb.ids", "--caption-emb-ids");
        inputs.push_back(emb);
        inputs.push_back(emb_ids);
        const auto index = build_index(captions, load_embeddings(emb, emb_ids), clustering);
        descriptions = select_descriptions(index, opt);
      }
      const fs::path dest = !out_path.empty() ? fs::path(out_path)
                            : study         ? study->descriptions()
                                            : throw Error(ErrorCode::invalid_argument, "missing --out");
      write_descriptions(dest, descriptions);
      write_provenance(dest, "describe", seed, inputs,
                       {{"mode", describe_mode}, {"negative_term", !no_negative}, {"intra_divisor", intra_divisor}});
      if (!stats_out.empty()) write_text(stats_out, uniqueness_stats(descriptions).to_json().dump(2) + "\n");
      std::cout << "wrote " << descriptions.size() << " descriptions to " << dest.string() << '\n';
      return 0;
    }

    if (*build_cmd) {
      const auto paths = require_study(study_dir);
      StudyConfig cfg;
      if (fs::exists(paths.config())) cfg = load_study_config(paths.config());
      if (opt_seed) cfg.seed = *opt_seed;
      if (opt_study_id) cfg.study_id = *opt_study_id;
      if (opt_reference) cfg.reference_size = *opt_reference;
      if (opt_hits) cfg.hits_per_class = *opt_hits;
      if (opt_annotators) cfg.annotators_per_hit = *opt_annotators;
      if (opt_negative) cfg.negative_mode = parse_negative_mode(*opt_negative);
      if (opt_classes) cfg.selected_classes = *opt_classes;
      if (opt_rate) cfg.rate_limit_per_class_per_day = *opt_rate;
      const auto clustering_file = paths.corpus("clustering.csv");
      const auto clustering = load_clustering(clustering_file);
      if (cfg.selected_classes.empty()) cfg.selected_classes = clustering.sorted_cluster_ids();
      cfg.validate();
      if (fs::exists(paths.tasks(TaskMode::learnability))) {
        const auto existing = load_taskset(paths.tasks(TaskMode::learnability));
        if (!(existing.config == cfg)) {
          throw Error(ErrorCode::config_mismatch,
                      "tasks already built with a different configuration; use a fresh study directory");
        }
      }
      std::vector<fs::path> inputs{clustering_file};
      std::optional<CentroidMap> centroids;
      if (cfg.negative_mode == NegativeMode::hard) {
        const auto f = paths.corpus("features.emb"), fi = paths.corpus("features.ids");
        centroids = centroids_and_hard_negatives(clustering, load_embeddings(f, fi));
        inputs.push_back(f);
        inputs.push_back(fi);
      }
      const auto ts = build_learnability_tasks(clustering, cfg, centroids ? &*centroids : nullptr);
      write_study_config(paths.config(), cfg);
      write_tasks(paths, ts, "tasks build", inputs);
      for (const auto& e : ts.exclusions) {
        std::cerr << "warning: class " << e.class_id << " excluded: " << e.reason << '\n';
      }
      std::cout << "wrote " << ts.tasks.size() << " tasks to " << paths.tasks(ts.mode).string() << '\n';
      return 0;
    }

    if (*derive_cmd || *rating_cmd) {
      const auto paths = require_study(study_dir);
      const fs::path desc_file = descriptions_path.empty() ? paths.descriptions() : fs::path(descriptions_path);
      const auto descriptions = load_descriptions(desc_file);
      const auto learn = load_study_tasks(paths, TaskMode::learnability);
      TaskSet ts;
      std::vector<fs::path> inputs{paths.tasks(TaskMode::learnability), desc_file};
      if (*derive_cmd) {
        ts = derive_describability_tasks(learn, descriptions);
      } else {
        const auto clustering_file = paths.corpus("clustering.csv");
        ts = build_rating_tasks(load_clustering(clustering_file), descriptions, learn.config);
        inputs.push_back(clustering_file);
      }
      write_tasks(paths, ts, *derive_cmd ? "tasks derive-desc" : "tasks rating", inputs);
      std::cout << "wrote " << ts.tasks.size() << " tasks to " << paths.tasks(ts.mode).string() << '\n';
      return 0;
    }

    const TaskMode mode = parse_task_mode(mode_name);

    if (*serve_cmd) {
      const auto paths = require_study(study_dir);
      auto ts = load_study_tasks(paths, mode);
      std::optional<ImageManifest> manifest;
      if (fs::exists(paths.corpus("manifest.csv"))) manifest = load_manifest(paths.corpus("manifest.csv"));
      StudyService service(std::move(ts), paths.log(mode), std::move(manifest));
      HttpStudyServer server(service, ui_dir.empty() ? std::nullopt : std::optional<fs::path>(ui_dir));
      if (!server.bind(host, port)) throw Error(ErrorCode::io, "cannot bind " + host + ":" + std::to_string(port));
      g_server = &server;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      std::cout << "serving " << to_string(mode) << " study on http://" << host << ":" << port << std::endl;
      server.run();
      g_server = nullptr;
      return 0;
    }

    if (*simulate_cmd) {
      const auto paths = require_study(study_dir);
      const auto ts = load_study_tasks(paths, mode);
      const auto log_path = paths.log(mode);
      if (fs::exists(log_path) && !force) {
        throw Error(ErrorCode::invalid_argument, log_path.string() + " exists; pass --force to overwrite");
      }
      const auto responses = simulate_annotators(ts, accuracy, seed);
      write_log(log_path, log_header(ts), responses);
      write_provenance(log_path, "simulate", seed, {paths.tasks(mode)}, {{"p", accuracy}});
      std::cout << "wrote " << responses.size() << " simulated responses to " << log_path.string() << '\n';
      return 0;
    }

    if (*score_cmd || *report_cmd) {
      const auto paths = require_study(study_dir);
      const auto ts = load_study_tasks(paths, mode);
      const auto responses = load_study_responses(paths, ts);
      std::vector<fs::path> inputs{paths.tasks(mode)};
      if (fs::exists(paths.log(mode))) inputs.push_back(paths.log(mode));
      if (*score_cmd) {
        const auto text = make_score_report(ts, responses).dump(2) + "\n";
        const fs::path dest = out_path.empty() ? paths.report(mode, "score.json") : fs::path(out_path);
        write_text(dest, text);
        write_provenance(dest, "score", seed, inputs);
        std::cout << text;
        return 0;
      }
      json report = make_score_report(ts, responses);
      const auto labels_file = paths.corpus("labels.csv"), names_file = paths.corpus("label_names.csv");
      if (fs::exists(labels_file) && fs::exists(names_file)) {
        const auto clustering = load_clustering(paths.corpus("clustering.csv"));
        const auto purity = class_purity(clustering, load_labelmap(labels_file, names_file));
        const auto stats = class_statistics(score_responses(ts, responses));
        for (auto& row : report["classes"]) {
          const auto* p = purity.find(row["class_id"].get<ClusterId>());
          row["purity"] = p && p->purity ? json(*p->purity) : json(nullptr);
        }
        report["bins"] = json::array();
        for (const auto& r : aggregate_by_purity(stats, purity, parse_double_list(bins_text))) {
          report["bins"].push_back(to_json(r));
        }
        inputs.push_back(labels_file);
        inputs.push_back(names_file);
      }
      const auto json_path = paths.report(mode, "report.json");
      write_text(json_path, report.dump(2) + "\n");
      write_provenance(json_path, "report", seed, inputs);

      std::ostringstream csv;
      csv << "row,class_id,purity_lo,purity_hi,classes,n,k,coherence,ci_low,ci_high,alpha\n";
      for (const auto& row : report["classes"]) {
        csv << "class," << row["class_id"].dump() << ",,," << 1 << ',' << row["n"].dump() << ',' << row["k"].dump()
            << ',' << csv_number(row["coherence"]) << ',' << csv_number(row["ci_low"]) << ','
            << csv_number(row["ci_high"]) << ',' << csv_number(row["alpha"]) << '\n';
      }
      if (report.contains("bins")) {
        for (const auto& b : report["bins"]) {
          csv << "bin,," << b["lo"].dump() << ',' << b["hi"].dump() << ',' << b["classes"].dump() << ','
              << b["n"].dump() << ',' << b["k"].dump() << ',' << csv_number(b["mean_coherence"]) << ','
              << csv_number(b["ci_low"]) << ',' << csv_number(b["ci_high"]) << ',' << csv_number(b["mean_alpha"])
              << '\n';
        }
      }
      const auto csv_path = paths.report(mode, "report.csv");
      write_text(csv_path, csv.str());
      write_provenance(csv_path, "report", seed, inputs);
      std::cout << report.dump(2) << '\n';
      return 0;
    }

    if (*capstats_cmd) {
      emit(uniqueness_stats(load_descriptions(descriptions_path), default_stopwords(), top_n).to_json(), out_path);
      return 0;
    }

    if (*retrieval_cmd) {
      const auto set = load_retrieval(retrieval_input);
      std::optional<std::vector<std::size_t>> subset;
      if (!subset_path.empty()) {
        subset.emplace();
        for (const auto& line : detail::read_lines(subset_path)) {
          const auto t = detail::trim(line);
          if (t.empty()) continue;
          const auto v = detail::parse_int(t);
          if (!v || *v < 0) throw Error(ErrorCode::parse, subset_path + ": bad class id '" + std::string(t) + "'");
          subset->push_back(static_cast<std::size_t>(*v));
        }
      }
      json out{{"classes", subset ? subset->size() : set.by_class().size()}, {"num_classes", set.num_classes()}};
      const char* prefix = subset ? "R@" : "top";
      for (auto k : parse_size_list(ks_text)) {
        out[std::string(prefix) + std::to_string(k)] = topk_accuracy(set, k, subset);
      }
      if (binary) {
        out["binary"] = binary_preference(set, seed, trials, subset);
        out["trials_per_positive"] = trials;
      }
      emit(out, out_path);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
