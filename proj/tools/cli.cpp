#include "tempcog/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <limits>
#include <json.hpp>
#include <sstream>

#include "tempcog/analysis.hpp"
#include "tempcog/behavior.hpp"
#include "tempcog/core.hpp"
#include "tempcog/dumpio.hpp"
#include "tempcog/embeddings.hpp"
#include "tempcog/neurons.hpp"
#include "tempcog/probes.hpp"
#include "tempcog/report.hpp"
#include "tempcog/synthkit.hpp"

namespace tempcog::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string out;
  std::uint64_t seed = 0;
};

struct CollectArgs {
  std::string endpoint;
  std::string model;
  std::string condition = "year";
  std::string range = "1525:2524";
  std::string pairs = "full";
  std::string prompt_template;
  std::size_t max_in_flight = 4;
  std::size_t retries = 3;
  int retry_delay_ms = 200;
  int timeout_s = 120;
  std::string cache;
  bool resume = false;
  std::string mock;
  int reference = core::kDefaultReference;
  std::size_t stop_after = 0;
};

struct FitArgs {
  std::vector<std::string> inputs;
  std::string pairs = "upper";
  std::string metric = "all";
  std::string range;
  int reference = core::kDefaultReference;
  bool exclude_reference = false;
};

struct ReferenceArgs {
  std::string input;
  int window = 5;
};

struct NeuronArgs {
  std::string temporal;
  std::string numerical;
  std::string selection;
  std::string criteria = "d=2.0,p=1e-4,c=0.95";
  std::size_t topk = 1000;
  int reference = core::kDefaultReference;
};

struct ProbeArgs {
  std::string dump;
  std::string metric = "all";
  std::string layers = "auto";
  int reference = core::kDefaultReference;
  double lr = 1e-4;
  std::size_t epochs = 200;
  std::size_t batch_size = 1024;
  double train_fraction = 0.8;
  bool no_standardize = false;
};

struct EmbedArgs {
  std::string endpoint;
  std::string model;
  std::string condition = "year";
  std::string range = "1525:2524";
  std::size_t batch_size = 64;
  std::size_t retries = 3;
  int timeout_s = 120;
  std::string cache;
  std::string mock;
  std::string input;
  std::string pairs = "upper";
  std::string metric = "all";
  int reference = core::kDefaultReference;
  std::size_t mds_k = 2;
  double mds_tol = 1e-6;
  std::size_t mds_max_iter = 300;
};

struct SynthArgs {
  std::string kind;
  std::string range = "1525:2524";
  int reference = core::kDefaultReference;
  double lambda = 1.0;
  double sigma = 0.0;
  std::string metric = "ref";
  std::size_t neurons = 5000;
  std::size_t planted = 50;
  double effect = 3.0;
  double consistency = 1.0;
  std::size_t layer_count = 1;
  double alpha = 0.8;
  double beta = 0.1;
  double future_fidelity = 1.0;
  std::size_t dim = 16;
  std::size_t samples = 2000;
  std::string pairs = "upper";
  std::string dtype = "float32";
};

struct ValidateArgs {
  std::vector<std::string> files;
};

void write_text(const fs::path& p, std::string_view text) { report::write_file_atomic(p, text); }

template <class Fn>
void write_stream(const fs::path& p, Fn&& fn) {
  std::ostringstream ss;
  fn(ss);
  write_text(p, ss.str());
}

core::SimilarityMatrix load_similarity(const fs::path& p) {
  if (p.extension() == ".csv") {
    std::ifstream in(p);
    if (!in) throw DataError("cannot open " + p.string());
    return core::read_similarity_csv(in, {p.stem().string(), core::Condition::Temporal});
  }
  return dumpio::read_similarity_dump(p);
}

neurons::NeuronSelection read_selection(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("layer,neuron", 0) != 0) {
    throw DataError(p.string() + " is not a neuron selection table");
  }
  neurons::NeuronSelection sel;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 7) throw DataError(fmt::format("{}:{}: expected 7 columns", p.string(), row));
    try {
      neurons::NeuronStats s;
      s.layer = std::stoi(f[0]);
      s.index = std::stoull(f[1]);
      s.cohen_d = std::stod(f[2]);
      s.t_stat = std::stod(f[3]);
      s.p_raw = std::stod(f[4]);
      s.p_fdr = std::stod(f[5]);
      s.consistency = std::stod(f[6]);
      sel.selected.push_back(s);
      ++sel.per_layer[s.layer];
    } catch (const std::logic_error&) {
      throw DataError(fmt::format("{}:{}: malformed number", p.string(), row));
    }
  }
  return sel;
}

std::vector<report::Series> per_layer_series(const neurons::NeuronSelection& sel) {
  report::Series s{"selected neurons", {}, {}};
  for (const auto& [layer, count] : sel.per_layer) {
    s.x.push_back(layer);
    s.y.push_back(static_cast<double>(count));
  }
  return {s};
}

class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int collect(const Common& c, const CollectArgs& a, report::RunManifest& m) {
    const fs::path dir(c.out);
    behavior::ExperimentConfig cfg;
    cfg.endpoint = a.endpoint;
    cfg.model = a.model;
    cfg.condition = core::parse_condition(a.condition);
    cfg.prompt_template = a.prompt_template;
    cfg.max_in_flight = a.max_in_flight;
    cfg.retry.retries = a.retries;
    cfg.retry.base_delay = std::chrono::milliseconds(a.retry_delay_ms);
    cfg.cache_path = a.cache.empty() ? dir / "cache.jsonl" : fs::path(a.cache);
    cfg.checkpoint_path = dir / "checkpoint.tsv";
    const core::PairSet pairs(core::YearRange::parse(a.range), core::parse_pair_mode(a.pairs));

    std::unique_ptr<behavior::RatingProvider> judge;
    if (a.mock == "ref") {
      judge = std::make_unique<synth::FunctionJudge>(synth::reference_rule(a.reference));
    } else if (!a.mock.empty()) {
      throw ConfigError(fmt::format("unknown mock judge '{}' (expected ref)", a.mock));
    } else {
      if (a.endpoint.empty()) throw ConfigError("--endpoint is required unless --mock is given");
      judge = std::make_unique<behavior::ChatCompletionJudge>(a.endpoint, net::api_key_from_env(),
                                                              std::chrono::seconds(a.timeout_s));
    }
    behavior::CollectOptions opts;
    opts.resume = a.resume;
    if (a.stop_after > 0) opts.stop_after = a.stop_after;

    const auto result = behavior::collect_matrix(cfg, pairs, *judge, opts);
    const auto& st = result.stats;
    out_ << fmt::format("pairs {} resumed {} completed {} network {} cache {} missing {}\n", st.pairs_total,
                        st.resumed, st.completed_now, st.network_calls, st.cache_hits, st.missing);
    if (!result.complete) {
      err_ << fmt::format("collection stopped with {} of {} pairs done; rerun with --resume\n",
                          st.resumed + st.completed_now, st.pairs_total);
      return kExitData;
    }
    write_stream(dir / "similarity.csv", [&](std::ostream& o) { core::write_matrix_csv(o, result.matrix); });
    dumpio::write_similarity_dump(dir / "similarity.simdump", result.matrix);
    write_stream(dir / "failures.csv", [&](std::ostream& o) {
      o << "year_i,year_j,attempts,error,reply\n";
      for (const auto& f : result.failures) {
        o << fmt::format("{},{},{},\"{}\",\"{}\"\n", f.pair.i, f.pair.j, f.attempts, f.error, f.raw);
      }
    });
    report::HeatmapOptions h;
    h.downsample = std::max<std::size_t>(1, (result.matrix.size() + 249) / 250);
    h.title = fmt::format("{} ({})", cfg.model, core::to_string(cfg.condition));
    write_text(dir / "heatmap.svg", report::render_heatmap(result.matrix, h));
    const std::string digest = behavior::matrix_digest(result.matrix);
    const json summary = {{"matrix_sha256", digest},
                          {"config_digest", cfg.digest(pairs)},
                          {"pairs", st.pairs_total},
                          {"missing", st.missing},
                          {"network_calls", st.network_calls},
                          {"cache_hits", st.cache_hits},
                          {"transport_failures", st.transport_failures},
                          {"parse_failures", st.parse_failures}};
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    out_ << "matrix digest " << digest << '\n';
    (void)m;
    return kExitOk;
  }

  int fit_metrics(const Common& c, const FitArgs& a, report::RunManifest& m) {
    const fs::path dir(c.out);
    const auto metrics = core::parse_metric_list(a.metric, a.reference);
    std::vector<report::MetricTableRow> rows;
    for (const auto& input : a.inputs) {
      m.add_input(input);
      const auto s = load_similarity(input);
      const auto range = a.range.empty() ? s.range() : core::YearRange::parse(a.range);
      const core::PairSet pairs(range, core::parse_pair_mode(a.pairs));
      const auto d = core::similarity_to_distance(s);
      std::string model = s.meta().model.empty() ? fs::path(input).stem().string() : s.meta().model;
      if (!a.exclude_reference) {
        rows.push_back({model, analysis::compare_metrics(d, pairs, metrics)});
        continue;
      }
      std::vector<core::YearPair> kept;
      std::vector<double> observed;
      for (const auto& p : pairs) {
        if (p.i == a.reference || p.j == a.reference) continue;
        const auto v = d.at_years(p.i, p.j);
        kept.push_back(p);
        observed.push_back(v.value_or(std::numeric_limits<double>::quiet_NaN()));
      }
      rows.push_back({model, analysis::compare_on_samples(kept, observed, metrics)});
    }
    write_stream(dir / "metrics.csv", [&](std::ostream& o) { report::write_metric_table(o, rows); });
    write_stream(dir / "fits.csv", [&](std::ostream& o) {
      o << "model,metric,alpha,beta,r2,n,degenerate\n";
      for (const auto& r : rows) {
        for (const auto& f : r.comparison.fits) {
          o << fmt::format("{},{},{},{},{},{},{}\n", r.model, f.metric.name(), f.fit.alpha, f.fit.beta, f.fit.r2,
                           f.fit.n, f.fit.degenerate ? 1 : 0);
        }
      }
    });
    report::write_metric_table(out_, rows);
    return kExitOk;
  }

  int estimate_reference(const Common& c, const ReferenceArgs& a, report::RunManifest& m) {
    const fs::path dir(c.out);
    m.add_input(a.input);
    const auto s = load_similarity(a.input);
    const auto e = analysis::estimate_reference(s, a.window);
    write_stream(dir / "reference_profile.csv", [&](std::ostream& o) { report::write_reference_profile(o, e); });
    report::Series series{fmt::format("window {}", a.window), {}, e.profile};
    for (auto y : e.centers) series.x.push_back(y);
    report::ChartOptions opt{"Diagonal window similarity", "center year", "mean similarity"};
    write_text(dir / "reference_profile.svg", report::render_series(std::span(&series, 1), opt));
    out_ << fmt::format("argmin {} mean {}\n", e.argmin, e.min_value);
    return kExitOk;
  }

  int neurons_identify(const Common& c, const NeuronArgs& a, report::RunManifest& m) {
    const fs::path dir(c.out);
    m.add_input(a.temporal);
    m.add_input(a.numerical);
    auto criteria = neurons::SelectionCriteria::parse(a.criteria);
    criteria.top_k = a.topk;
    const neurons::DumpActivations source(a.temporal, a.numerical);
    const auto screen = neurons::identify_neurons(source, criteria);
    write_stream(dir / "neuron_stats.csv", [&](std::ostream& o) { report::write_neuron_stats(o, screen.all); });
    write_stream(dir / "selected.csv",
                 [&](std::ostream& o) { report::write_neuron_stats(o, screen.selection.selected); });
    write_stream(dir / "selection_summary.csv",
                 [&](std::ostream& o) { report::write_selection_summary(o, screen.selection); });
    const auto series = per_layer_series(screen.selection);
    if (!series.front().x.empty()) {
      report::ChartOptions opt{"Temporal-preferential neurons per layer", "layer", "count"};
      write_text(dir / "selection_per_layer.svg", report::render_series(series, opt));
    }
    out_ << fmt::format("selected {} of {} neurons ({:.4f}%)\n", screen.selection.selected.size(),
                        screen.selection.total_neurons, 100.0 * screen.selection.proportion);
    return kExitOk;
  }

  int neurons_curve(const Common& c, const NeuronArgs& a, report::RunManifest& m) {
    const fs::path dir(c.out);
    m.add_input(a.temporal);
    m.add_input(a.selection);
    const neurons::DumpActivations source(a.temporal);
    const auto sel = read_selection(a.selection);
    const auto curve = neurons::mean_activation_curve(sel, source, a.topk);
    write_stream(dir / "curve.csv", [&](std::ostream& o) { report::write_activation_curve(o, curve); });
    report::Series s{fmt::format("top {} neurons", curve.neurons_used), {}, curve.mean};
    for (auto y : curve.years) s.x.push_back(y);
    report::ChartOptions opt{"Mean activation of selected neurons", "year", "activation"};
    write_text(dir / "curve.svg", report::render_series(std::span(&s, 1), opt));
    const auto it = std::min_element(curve.mean.begin(), curve.mean.end());
    out_ << fmt::format("curve minimum at {}\n", curve.years[static_cast<std::size_t>(it - curve.mean.begin())]);
    return kExitOk;
  }

  int neurons_logfit(const Common& c, const NeuronArgs& a, report::RunManifest& m) {
    const fs::path dir(c.out);
    m.add_input(a.temporal);
    m.add_input(a.selection);
    const neurons::DumpActivations source(a.temporal);
    const auto sel = read_selection(a.selection);
    const auto rep = neurons::layerwise_log_fit(source, sel, a.reference);
    write_stream(dir / "logfit.csv", [&](std::ostream& o) { report::write_log_fits(o, rep); });
    std::vector<report::Series> series{{"past", {}, {}}, {"future", {}, {}}};
    for (const auto& f : rep.fits) {
      auto& s = series[f.side == neurons::Side::Past ? 0 : 1];
      s.x.push_back(f.layer);
      s.y.push_back(f.fit.r2);
    }
    report::ChartOptions opt{"Layer-wise logarithmic fit", "layer", "R^2"};
    write_text(dir / "logfit.svg", report::render_series(series, opt));
    for (const auto& best : {rep.best_past, rep.best_future}) {
      if (best) {
        out_ << fmt::format("best {} layer {} alpha {} beta {} r2 {}\n", neurons::to_string(best->side),
                            best->layer, best->fit.alpha, best->fit.beta, best->fit.r2);
      }
    }
    return kExitOk;
  }

  int probes_sweep(const Common& c, const ProbeArgs& a, report::RunManifest& m) {
    const fs::path dir(c.out);
    m.add_input(a.dump);
    const dumpio::DumpReader reader(a.dump);
    const auto metrics = core::parse_metric_list(a.metric, a.reference);
    probes::ProbeTrainConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch_size;
    cfg.train_fraction = a.train_fraction;
    cfg.seed = c.seed;
    cfg.standardize = !a.no_standardize;
    std::vector<int> layers;
    const auto& declared = reader.header().layers;
    if (a.layers == "auto") {
      for (int pos : probes::sample_layers(declared.size()).layers) {
        layers.push_back(declared[static_cast<std::size_t>(pos)].id);
      }
    } else {
      std::stringstream ls(a.layers);
      for (std::string t; std::getline(ls, t, ',');) {
        try {
          layers.push_back(std::stoi(t));
        } catch (const std::logic_error&) {
          throw ConfigError(fmt::format("--layers expects auto or a comma-separated list, got '{}'", a.layers));
        }
      }
    }
    const auto rep = probes::probe_sweep(reader, metrics, cfg, layers);
    write_stream(dir / "probe_report.csv", [&](std::ostream& o) { report::write_probe_report(o, rep); });
    std::vector<report::Series> series;
    for (const auto& metric : metrics) series.push_back({std::string(metric.name()), {}, {}});
    for (const auto& row : rep.rows) {
      for (std::size_t k = 0; k < metrics.size(); ++k) {
        if (metrics[k] == row.metric) {
          series[k].x.push_back(row.layer);
          series[k].y.push_back(row.score.adjusted_r2);
        }
      }
    }
    report::ChartOptions opt{"Layer-wise probe performance", "layer", "adjusted R^2"};
    write_text(dir / "probe_r2.svg", report::render_series(series, opt));
    for (const auto& g : rep.gaps) err_ << fmt::format("layer {} skipped: {}\n", g.layer, g.reason);
    out_ << fmt::format("{} probe rows, {} gaps\n", rep.rows.size(), rep.gaps.size());
    return kExitOk;
  }

  int embed_collect(const Common& c, const EmbedArgs& a, report::RunManifest&) {
    const fs::path dir(c.out);
    embeddings::EmbedConfig cfg;
    cfg.model = a.model;
    cfg.condition = core::parse_condition(a.condition);
    cfg.batch_size = a.batch_size;
    cfg.retry.retries = a.retries;
    cfg.cache_path = a.cache.empty() ? dir / "embedding_cache.jsonl" : fs::path(a.cache);
    std::unique_ptr<embeddings::EmbeddingProvider> provider;
    if (a.mock == "angle") {
      provider = std::make_unique<synth::AngleEmbeddingProvider>(a.reference);
    } else if (!a.mock.empty()) {
      throw ConfigError(fmt::format("unknown mock provider '{}' (expected angle)", a.mock));
    } else {
      if (a.endpoint.empty()) throw ConfigError("--endpoint is required unless --mock is given");
      provider = std::make_unique<embeddings::OpenAIEmbeddingClient>(a.endpoint, net::api_key_from_env(),
                                                                     std::chrono::seconds(a.timeout_s));
    }
    embeddings::EmbedStats st;
    const auto set = embeddings::embed_collect(*provider, cfg, core::YearRange::parse(a.range), &st);
    embeddings::write_embedding_dump(dir / "embeddings.embdump", set);
    out_ << fmt::format("embedded {} years, dim {}, network calls {}, cache hits {}\n", set.range.size(), set.dim,
                        st.network_calls, st.cache_hits);
    return kExitOk;
  }

  int embed_analyze(const Common& c, const EmbedArgs& a, report::RunManifest& m) {
    const fs::path dir(c.out);
    m.add_input(a.input);
    const auto set = embeddings::read_embedding_dump(a.input);
    const auto s = embeddings::cosine_matrix(set);
    const core::PairSet pairs(set.range, core::parse_pair_mode(a.pairs));
    const auto metrics = core::parse_metric_list(a.metric, a.reference);
    const auto cmp = embeddings::semantic_regression(s, pairs, metrics);
    const std::vector<report::MetricTableRow> rows{{set.model, cmp}};
    write_stream(dir / "semantic.csv", [&](std::ostream& o) { report::write_semantic_matrix(o, s); });
    write_stream(dir / "semantic_regression.csv", [&](std::ostream& o) { report::write_metric_table(o, rows); });
    embeddings::MdsOptions mo;
    mo.k = a.mds_k;
    mo.tol = a.mds_tol;
    mo.max_iter = a.mds_max_iter;
    const auto mds = embeddings::mds_embed(s.dissimilarity(), mo);
    write_stream(dir / "mds.csv", [&](std::ostream& o) { report::write_mds_coordinates(o, set.range, mds); });
    if (mds.coordinates.cols() >= 2) {
      std::vector<report::ScatterPoint> pts;
      const double span = std::max<double>(1.0, static_cast<double>(set.range.size() - 1));
      for (Eigen::Index i = 0; i < mds.coordinates.rows(); ++i) {
        const auto year = set.range.year_at(static_cast<std::size_t>(i));
        pts.push_back({mds.coordinates(i, 0), mds.coordinates(i, 1), static_cast<double>(i) / span,
                       year % 100 == 0 ? std::to_string(year) : std::string()});
      }
      report::ChartOptions opt{fmt::format("MDS of {} (stress {:.4f})", set.model, mds.stress), "dim 1", "dim 2"};
      write_text(dir / "mds.svg", report::render_scatter(pts, opt));
    }
    report::HeatmapOptions h;
    h.downsample = std::max<std::size_t>(1, (s.size() + 249) / 250);
    h.title = set.model;
    write_text(dir / "semantic_heatmap.svg", report::render_heatmap(s.to_similarity({set.model}), h));
    const json summary = {{"stress", mds.stress},
                          {"iterations", mds.iterations},
                          {"converged", mds.converged},
                          {"monotone", mds.monotone},
                          {"undefined_rows", s.undefined_count()}};
    write_text(dir / "mds_summary.json", summary.dump(2) + "\n");
    report::write_metric_table(out_, rows);
    out_ << fmt::format("mds stress {} after {} iterations\n", mds.stress, mds.iterations);
    return kExitOk;
  }

  int synth(const Common& c, const SynthArgs& a, report::RunManifest&) {
    const fs::path dir(c.out);
    const auto range = core::YearRange::parse(a.range);
    json truth = {{"kind", a.kind}, {"seed", c.seed}, {"range", range.to_string()}};
    if (a.kind == "reference") {
      const auto g = synth::gen_reference_similarity({range, a.reference, a.lambda, a.sigma, c.seed});
      write_stream(dir / "similarity.csv", [&](std::ostream& o) { core::write_matrix_csv(o, g.matrix); });
      dumpio::write_similarity_dump(dir / "similarity.simdump", g.matrix);
      truth.update({{"reference", a.reference}, {"lambda", a.lambda}, {"sigma", a.sigma}});
    } else if (a.kind == "metric") {
      const auto metric = core::TheoreticalMetric::parse(a.metric, a.reference);
      const auto g = synth::gen_metric_distance({range, metric, a.sigma, c.seed});
      core::SimilarityMatrix s(range, {"synthetic-metric"});
      for (std::size_t r = 0; r < range.size(); ++r) {
        for (std::size_t k = 0; k < range.size(); ++k) s.set(r, k, 1.0 - *g.matrix.at(r, k));
      }
      write_stream(dir / "similarity.csv", [&](std::ostream& o) { core::write_matrix_csv(o, s); });
      truth.update({{"metric", metric.name()}, {"scale", g.scale}, {"sigma", a.sigma}});
    } else if (a.kind == "planted-neurons") {
      const auto g = synth::gen_planted_neurons(
          {a.neurons, a.planted, a.effect, a.consistency, a.layer_count, range, c.seed});
      neurons::write_activation_dump(dir / "temporal.actdump", g.source, core::Condition::Temporal, "synthetic");
      neurons::write_activation_dump(dir / "numerical.actdump", g.source, core::Condition::Numerical, "synthetic");
      json planted = json::array();
      for (const auto& [layer, idx] : g.planted) planted.push_back({layer, idx});
      truth.update({{"neurons", a.neurons}, {"effect", a.effect}, {"consistency", a.consistency},
                    {"layers", a.layer_count}, {"planted", planted}});
    } else if (a.kind == "log-coding") {
      synth::LogCodingSpec spec;
      spec.range = range;
      spec.reference = a.reference;
      spec.alpha = a.alpha;
      spec.beta = a.beta;
      spec.sigma = a.sigma;
      spec.future_fidelity = a.future_fidelity;
      spec.n_layers = a.layer_count;
      spec.seed = c.seed;
      const auto g = synth::gen_log_coding(spec);
      neurons::write_activation_dump(dir / "temporal.actdump", g.source, core::Condition::Temporal, "synthetic");
      neurons::write_activation_dump(dir / "numerical.actdump", g.source, core::Condition::Numerical, "synthetic");
      truth.update({{"reference", a.reference}, {"alpha", a.alpha}, {"beta", a.beta}, {"sigma", a.sigma},
                    {"future_fidelity", a.future_fidelity}});
    } else if (a.kind == "hierarchical") {
      synth::HierarchicalCodeSpec spec;
      spec.range = range;
      spec.mode = core::parse_pair_mode(a.pairs);
      spec.n_pairs = a.samples;
      spec.n_layers = a.layer_count;
      spec.dim = a.dim;
      spec.noise = a.sigma;
      spec.reference = a.reference;
      spec.seed = c.seed;
      if (a.dtype == "float16") {
        spec.element_type = dumpio::ElementType::Float16;
      } else if (a.dtype != "float32") {
        throw ConfigError("--dtype must be float32 or float16");
      }
      const auto g = synth::write_hierarchical_code(dir / "hidden.hsdump", spec);
      truth.update({{"ref_share", g.ref_share}, {"dim", a.dim}, {"pairs", g.pair_indices.size()},
                    {"noise", a.sigma}, {"reference", a.reference}});
    } else {
      throw ConfigError(fmt::format("unknown generator '{}'", a.kind));
    }
    write_text(dir / "truth.json", truth.dump(2) + "\n");
    out_ << fmt::format("wrote {} data to {}\n", a.kind, dir.string());
    return kExitOk;
  }

  int validate(const Common& c, const ValidateArgs& a, report::RunManifest& m) {
    bool ok = true;
    std::string text;
    for (const auto& f : a.files) {
      const auto rep = dumpio::validate_dump(f);
      if (rep.ok) {
        text += fmt::format("OK {}\n", f);
        m.add_input(f);
      } else {
        ok = false;
        for (const auto& p : rep.problems) text += fmt::format("FAIL {}: {}\n", f, p);
      }
    }
    out_ << text;
    if (!c.out.empty()) write_text(fs::path(c.out) / "validation.txt", text);
    if (!ok) {
      err_ << "validation failed\n";
      return kExitData;
    }
    return kExitOk;
  }

 private:
  std::ostream& out_;
  std::ostream& err_;
};

void add_common(CLI::App* app, Common& c, bool out_required = true) {
  auto* o = app->add_option("--out", c.out, "Run directory for all outputs");
  if (out_required) o->required();
  app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  static const bool logger_ready = [] {
    spdlog::set_default_logger(spdlog::stderr_logger_mt("tempcog"));
    return true;
  }();
  (void)logger_ready;

  CLI::App app{"Temporal-cognition measurement pipeline", "tempcog"};
  app.set_config("--config", "", "Key-value config file; command-line flags take precedence");
  app.set_version_flag("--version", std::string(report::kToolVersion));
  app.require_subcommand(1);

  Common common;
  CollectArgs collect;
  FitArgs fit;
  ReferenceArgs ref;
  NeuronArgs neuron;
  ProbeArgs probe;
  EmbedArgs embed;
  SynthArgs synth_args;
  ValidateArgs validate;

  auto* c_collect = app.add_subcommand("collect", "Collect a behavioural similarity matrix");
  add_common(c_collect, common);
  c_collect->add_option("--endpoint", collect.endpoint, "OpenAI-compatible base URL");
  c_collect->add_option("--model", collect.model, "Model id")->required();
  c_collect->add_option("--condition", collect.condition, "year|number")->capture_default_str();
  c_collect->add_option("--range", collect.range, "Year range a:b")->capture_default_str();
  c_collect->add_option("--pairs", collect.pairs, "full|upper")->capture_default_str();
  c_collect->add_option("--prompt-template", collect.prompt_template, "Template with {A} and {B}");
  c_collect->add_option("--max-in-flight", collect.max_in_flight, "Concurrent requests")->capture_default_str();
  c_collect->add_option("--retries", collect.retries, "Retries per pair")->capture_default_str();
  c_collect->add_option("--retry-delay-ms", collect.retry_delay_ms, "Initial backoff")->capture_default_str();
  c_collect->add_option("--timeout", collect.timeout_s, "Request timeout in seconds")->capture_default_str();
  c_collect->add_option("--cache", collect.cache, "Response cache file (default: <out>/cache.jsonl)");
  c_collect->add_flag("--resume", collect.resume, "Continue from <out>/checkpoint.tsv");
  c_collect->add_option("--mock", collect.mock, "Offline judge: ref");
  c_collect->add_option("--reference", collect.reference, "Reference year of the mock judge")->capture_default_str();
  c_collect->add_option("--stop-after", collect.stop_after, "Stop after N new pairs (interruption drill)");

  auto* c_fit = app.add_subcommand("fit-metrics", "Regress behavioural distances onto the theoretical metrics");
  add_common(c_fit, common);
  c_fit->add_option("-i,--input", fit.inputs, "Similarity matrix (.csv or SIMDUMP); repeatable")->required();
  c_fit->add_option("--pairs", fit.pairs, "full|upper")->capture_default_str();
  c_fit->add_option("--metric", fit.metric, "log|lev|ref|all or a list")->capture_default_str();
  c_fit->add_option("--range", fit.range, "Restrict to a sub-range a:b");
  c_fit->add_option("--reference", fit.reference, "Reference year of d_ref")->capture_default_str();
  c_fit->add_flag("--exclude-reference", fit.exclude_reference, "Drop pairs that involve the reference year");

  auto* c_ref = app.add_subcommand("estimate-reference", "Diagonal sliding-window reference estimate");
  add_common(c_ref, common);
  c_ref->add_option("-i,--input", ref.input, "Similarity matrix (.csv or SIMDUMP)")->required();
  c_ref->add_option("--window", ref.window, "Odd window size")->capture_default_str();

  auto* c_neurons = app.add_subcommand("neurons", "Temporal-preferential neuron analysis");
  c_neurons->require_subcommand(1);
  auto* c_identify = c_neurons->add_subcommand("identify", "Screen neurons against the selection gates");
  add_common(c_identify, common);
  c_identify->add_option("--temporal", neuron.temporal, "Temporal ACTDUMP")->required();
  c_identify->add_option("--numerical", neuron.numerical, "Numerical ACTDUMP")->required();
  c_identify->add_option("--criteria", neuron.criteria, "d=..,p=..,c=..")->capture_default_str();
  c_identify->add_option("--topk", neuron.topk, "Curve neuron budget")->capture_default_str();
  auto* c_curve = c_neurons->add_subcommand("curve", "Mean activation curve of the top-k selected neurons");
  add_common(c_curve, common);
  c_curve->add_option("--temporal", neuron.temporal, "Temporal ACTDUMP")->required();
  c_curve->add_option("--selection", neuron.selection, "selected.csv from identify")->required();
  c_curve->add_option("--topk", neuron.topk, "Neuron budget")->capture_default_str();
  auto* c_logfit = c_neurons->add_subcommand("logfit", "Layer-wise logarithmic fit of selected neurons");
  add_common(c_logfit, common);
  c_logfit->add_option("--temporal", neuron.temporal, "Temporal ACTDUMP")->required();
  c_logfit->add_option("--selection", neuron.selection, "selected.csv from identify")->required();
  c_logfit->add_option("--reference", neuron.reference, "Reference year")->capture_default_str();

  auto* c_probes = app.add_subcommand("probes", "Linear probes on hidden states");
  c_probes->require_subcommand(1);
  auto* c_sweep = c_probes->add_subcommand("sweep", "Train one probe per layer and metric");
  add_common(c_sweep, common);
  c_sweep->add_option("--dump", probe.dump, "HSDUMP file")->required();
  c_sweep->add_option("--metric", probe.metric, "log|lev|ref|all or a list")->capture_default_str();
  c_sweep->add_option("--layers", probe.layers, "auto or comma-separated layer ids")->capture_default_str();
  c_sweep->add_option("--reference", probe.reference, "Reference year of d_ref")->capture_default_str();
  c_sweep->add_option("--lr", probe.lr, "Adam learning rate")->capture_default_str();
  c_sweep->add_option("--epochs", probe.epochs, "Epochs")->capture_default_str();
  c_sweep->add_option("--batch-size", probe.batch_size, "Minibatch size")->capture_default_str();
  c_sweep->add_option("--train-fraction", probe.train_fraction, "Train share of the split")->capture_default_str();
  c_sweep->add_flag("--no-standardize", probe.no_standardize, "Train on raw inputs");

  auto* c_embed = app.add_subcommand("embed", "Embedding-space analysis");
  c_embed->require_subcommand(1);
  auto* c_ecollect = c_embed->add_subcommand("collect", "Embed every year stimulus");
  add_common(c_ecollect, common);
  c_ecollect->add_option("--endpoint", embed.endpoint, "OpenAI-compatible base URL");
  c_ecollect->add_option("--model", embed.model, "Embedding model id")->required();
  c_ecollect->add_option("--condition", embed.condition, "year|number")->capture_default_str();
  c_ecollect->add_option("--range", embed.range, "Year range a:b")->capture_default_str();
  c_ecollect->add_option("--batch-size", embed.batch_size, "Inputs per request")->capture_default_str();
  c_ecollect->add_option("--retries", embed.retries, "Retries per batch")->capture_default_str();
  c_ecollect->add_option("--timeout", embed.timeout_s, "Request timeout in seconds")->capture_default_str();
  c_ecollect->add_option("--cache", embed.cache, "Cache file (default: <out>/embedding_cache.jsonl)");
  c_ecollect->add_option("--mock", embed.mock, "Offline provider: angle");
  c_ecollect->add_option("--reference", embed.reference, "Reference year of the mock provider")
      ->capture_default_str();
  auto* c_analyze = c_embed->add_subcommand("analyze", "Cosine matrix, MDS and semantic regression");
  add_common(c_analyze, common);
  c_analyze->add_option("-i,--input", embed.input, "EMBDUMP file")->required();
  c_analyze->add_option("--pairs", embed.pairs, "full|upper")->capture_default_str();
  c_analyze->add_option("--metric", embed.metric, "log|lev|ref|all or a list")->capture_default_str();
  c_analyze->add_option("--reference", embed.reference, "Reference year of d_ref")->capture_default_str();
  c_analyze->add_option("--mds-k", embed.mds_k, "MDS dimension")->capture_default_str();
  c_analyze->add_option("--mds-tol", embed.mds_tol, "Relative stress tolerance")->capture_default_str();
  c_analyze->add_option("--mds-max-iter", embed.mds_max_iter, "SMACOF iteration cap")->capture_default_str();

  auto* c_synth = app.add_subcommand("synth", "Write synthetic ground-truth data");
  add_common(c_synth, common);
  c_synth->add_option("--kind", synth_args.kind, "reference|metric|planted-neurons|log-coding|hierarchical")
      ->required()
      ->check(CLI::IsMember({"reference", "metric", "planted-neurons", "log-coding", "hierarchical"}));
  c_synth->add_option("--range", synth_args.range, "Year range a:b")->capture_default_str();
  c_synth->add_option("--reference", synth_args.reference, "Planted reference year")->capture_default_str();
  c_synth->add_option("--lambda", synth_args.lambda, "Similarity decay")->capture_default_str();
  c_synth->add_option("--sigma", synth_args.sigma, "Gaussian noise")->capture_default_str();
  c_synth->add_option("--metric", synth_args.metric, "Generating metric for --kind metric")->capture_default_str();
  c_synth->add_option("--neurons", synth_args.neurons, "Neuron count")->capture_default_str();
  c_synth->add_option("--planted", synth_args.planted, "Planted neuron count")->capture_default_str();
  c_synth->add_option("--effect", synth_args.effect, "Planted effect size")->capture_default_str();
  c_synth->add_option("--consistency", synth_args.consistency, "Planted consistency")->capture_default_str();
  c_synth->add_option("--layer-count", synth_args.layer_count, "Number of layers")->capture_default_str();
  c_synth->add_option("--alpha", synth_args.alpha, "Log-law slope")->capture_default_str();
  c_synth->add_option("--beta", synth_args.beta, "Log-law intercept")->capture_default_str();
  c_synth->add_option("--future-fidelity", synth_args.future_fidelity, "Future-side signal share")
      ->capture_default_str();
  c_synth->add_option("--dim", synth_args.dim, "Hidden dimension")->capture_default_str();
  c_synth->add_option("--samples", synth_args.samples, "Sampled pairs")->capture_default_str();
  c_synth->add_option("--pairs", synth_args.pairs, "full|upper")->capture_default_str();
  c_synth->add_option("--dtype", synth_args.dtype, "float32|float16")->capture_default_str();

  auto* c_validate = app.add_subcommand("validate", "Check dump files");
  add_common(c_validate, common, false);
  c_validate->add_option("files", validate.files, "Dump files")->required();

  std::vector<char*> argv;
  std::vector<std::string> storage = args;
  if (storage.empty()) storage.emplace_back("tempcog");
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  Runner runner(out, err);
  std::string command;
  std::function<int(report::RunManifest&)> body;
  CLI::App* leaf = c_validate;
  if (c_collect->parsed()) {
    leaf = c_collect;
    command = "collect";
    body = [&](auto& m) { return runner.collect(common, collect, m); };
  } else if (c_fit->parsed()) {
    leaf = c_fit;
    command = "fit-metrics";
    body = [&](auto& m) { return runner.fit_metrics(common, fit, m); };
  } else if (c_ref->parsed()) {
    leaf = c_ref;
    command = "estimate-reference";
    body = [&](auto& m) { return runner.estimate_reference(common, ref, m); };
  } else if (c_identify->parsed()) {
    leaf = c_identify;
    command = "neurons identify";
    body = [&](auto& m) { return runner.neurons_identify(common, neuron, m); };
  } else if (c_curve->parsed()) {
    leaf = c_curve;
    command = "neurons curve";
    body = [&](auto& m) { return runner.neurons_curve(common, neuron, m); };
  } else if (c_logfit->parsed()) {
    leaf = c_logfit;
    command = "neurons logfit";
    body = [&](auto& m) { return runner.neurons_logfit(common, neuron, m); };
  } else if (c_sweep->parsed()) {
    leaf = c_sweep;
    command = "probes sweep";
    body = [&](auto& m) { return runner.probes_sweep(common, probe, m); };
  } else if (c_ecollect->parsed()) {
    leaf = c_ecollect;
    command = "embed collect";
    body = [&](auto& m) { return runner.embed_collect(common, embed, m); };
  } else if (c_analyze->parsed()) {
    leaf = c_analyze;
    command = "embed analyze";
    body = [&](auto& m) { return runner.embed_analyze(common, embed, m); };
  } else if (c_synth->parsed()) {
    leaf = c_synth;
    command = "synth";
    body = [&](auto& m) { return runner.synth(common, synth_args, m); };
  } else {
    command = "validate";
    body = [&](auto& m) { return runner.validate(common, validate, m); };
  }

  report::RunManifest manifest(command, args);
  manifest.set_config(leaf->config_to_str(true, false));
  try {
    if (!common.out.empty()) fs::create_directories(common.out);
    const int code = body(manifest);
    if (!common.out.empty()) {
      manifest.collect_outputs(common.out);
      manifest.finish();
      manifest.write(common.out);
    }
    return code;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace tempcog::cli
