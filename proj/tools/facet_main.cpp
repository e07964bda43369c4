// facet: train eigenface bases, recover images from similarity oracles, serve and evaluate.
//
// Exit codes: 0 ok, 2 usage, 3 io, 4 budget exhausted, 1 anything else.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "facet/bench.hpp"
#include "facet/eigenbasis.hpp"
#include "facet/error.hpp"
#include "facet/oracle.hpp"
#include "facet/recovery.hpp"
#include "facet/run_config.hpp"
#include "facet/synthetic.hpp"
#include "facet/wire.hpp"

namespace fs = std::filesystem;
using namespace facet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitBudget = 4;

// Budget exhaustion observed without an exception (the oracle refused a batch).
struct PartialRun {};

std::string option_key(const CLI::Option* opt) {
  const auto& names = opt->get_lnames();
  return names.empty() ? std::string{} : names.front();
}

bool is_settable(const CLI::Option* opt) {
  const std::string key = option_key(opt);
  return !key.empty() && key != "help" && key != "config";
}

std::set<std::string> option_keys(const CLI::App* sub) {
  std::set<std::string> keys;
  for (const auto* opt : sub->get_options())
    if (is_settable(opt)) keys.insert(option_key(opt));
  return keys;
}

// Every option of the subcommand with the value it resolved to, defaults included.
RunConfig resolved_config(const CLI::App* sub) {
  RunConfig cfg;
  for (const auto* opt : sub->get_options()) {
    if (!is_settable(opt)) continue;
    std::string value;
    if (opt->get_expected_max() == 0) {  // flag
      value = opt->as<bool>() ? "true" : "false";
    } else if (opt->count() > 0) {
      const auto results = opt->reduced_results();
      for (std::size_t i = 0; i < results.size(); ++i) value += (i ? "," : "") + results[i];
      if (results.empty()) value = opt->get_default_str();
    } else {
      value = opt->get_default_str();
    }
    cfg.set(option_key(opt), value);
  }
  return cfg;
}

void write_sidecar(const CLI::App* sub, const fs::path& artifact) {
  RunConfig cfg = resolved_config(sub);
  fs::path path = artifact;
  path += ".config";
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << "# resolved settings for: facet " << sub->get_name() << "\n" << cfg.to_string();
}

// Moves --config FILE out of the arguments and splices its entries in as --key=value
// right after the subcommand name, so explicit flags (which come later) win.
std::vector<std::string> expand_config(CLI::App& app, std::vector<std::string> args) {
  if (args.size() < 2) return args;
  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(args[1]);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }
  std::optional<std::string> config_path;
  std::vector<std::string> rest;
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config requires a file");
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!config_path) return args;
  const RunConfig cfg = RunConfig::load(*config_path, option_keys(sub));
  std::vector<std::string> out{args[0], args[1]};
  for (const auto& [key, value] : cfg.values()) out.push_back("--" + key + "=" + value);
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

void add_recovery_options(CLI::App* sub, RecoveryConfig& cfg, std::string& accept) {
  sub->add_option("--budget", cfg.query_budget, "Total oracle queries");
  sub->add_option("--restarts", cfg.restarts, "Probe lines before continuing the best (0 = single line)");
  sub->add_option("--restart-iters", cfg.restart_iters, "Iterations per probe line");
  sub->add_option("--batch", cfg.batch_size, "Candidates per iteration");
  sub->add_option("--sigma", cfg.sigma, "Standard deviation of coefficient offsets");
  sub->add_option("--accept", accept, "Update rule")->check(CLI::IsMember({"always", "monotone"}));
  sub->add_option("--seed", cfg.seed, "Recovery seed")->envname("FACET_SEED");
}

struct EmbedderFlags {
  int dim = 128;
  bool linear = false;

  EmbedderOptions options() const { return linear ? EmbedderOptions::linear(dim) : EmbedderOptions{dim, true, true}; }
};

void add_embedder_options(CLI::App* sub, EmbedderFlags& flags) {
  sub->add_option("--embed-dim", flags.dim, "Embedding dimension of local random embedders")->check(CLI::PositiveNumber);
  sub->add_flag("--linear-embedder", flags.linear, "Use the linear embedder (no centering, no tanh)");
}

// --oracle local:SEED:TARGET_FILE or http://host:port
std::shared_ptr<SimilarityOracle> open_oracle(const std::string& locator, const std::string& id,
                                              const EmbedderFlags& embedder) {
  if (locator.rfind("local:", 0) == 0) {
    const std::string rest = locator.substr(6);
    const auto colon = rest.find(':');
    if (colon == std::string::npos) throw UsageError("--oracle local expects local:SEED:TARGET_FILE");
    std::uint64_t seed = 0;
    try {
      seed = std::stoull(rest.substr(0, colon));
    } catch (const std::exception&) {
      throw UsageError("--oracle local: bad seed '" + rest.substr(0, colon) + "'");
    }
    const Image target = read_image(rest.substr(colon + 1));
    auto oracle = std::make_shared<RandomEmbedder>(seed, target.geometry(), embedder.options());
    oracle->enroll(id, target);
    return oracle;
  }
  return std::shared_ptr<SimilarityOracle>(connect(locator));
}

// A malformed geometry is a usage problem, not an io one.
Geometry parse_geometry(const std::string& text) {
  try {
    return Geometry::parse(text);
  } catch (const InputError& e) {
    throw UsageError(e.what());
  }
}

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eigenface bases and black-box face image recovery"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();

  // synth-faces
  auto* synth = app.add_subcommand("synth-faces", "Write synthetic face-like images");
  std::string synth_out, synth_geometry = "32x32x1";
  std::size_t synth_count = 100;
  std::uint64_t synth_seed = 0, synth_model_seed = 0;
  bool synth_reflect = false;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--count", synth_count, "Number of images");
  synth->add_option("--geometry", synth_geometry, "WxHxC");
  synth->add_option("--model-seed", synth_model_seed, "Seed of the shared part bank");
  synth->add_option("--seed", synth_seed, "Seed of the identities")->envname("FACET_SEED");
  synth->add_flag("--reflect", synth_reflect, "Also write the mirror image of every face");

  // train-basis
  auto* train_cmd = app.add_subcommand("train-basis", "Train an eigenface basis with the linear autoencoder");
  std::string train_data, train_out, train_loss_csv;
  TrainConfig train_cfg;
  bool no_symmetry = false, no_generative = false;
  train_cmd->add_option("--data", train_data, "Directory of training images")->required();
  train_cmd->add_option("--out", train_out, "Basis file to write")->required();
  train_cmd->add_option("--k", train_cfg.k, "Number of eigenfaces");
  train_cmd->add_option("--step-size", train_cfg.step_size, "SGD step size");
  train_cmd->add_option("--batch", train_cfg.batch_size, "Mini-batch size");
  train_cmd->add_option("--epochs", train_cfg.epochs, "Training epochs");
  train_cmd->add_option("--seed", train_cfg.seed, "Training seed")->envname("FACET_SEED");
  train_cmd->add_flag("--no-symmetry", no_symmetry, "Reconstruct x instead of its symmetrized version");
  train_cmd->add_flag("--no-generative", no_generative, "Drop the generative term");
  train_cmd->add_option("--loss-csv", train_loss_csv, "Per-epoch loss CSV (default <out>.loss.csv)");

  // recover
  auto* recover_cmd = app.add_subcommand("recover", "Recover an image of an enrolled identity");
  std::string rec_basis, rec_oracle, rec_id, rec_image, rec_traj, rec_accept = "monotone";
  RecoveryConfig rec_cfg;
  EmbedderFlags rec_embedder;
  recover_cmd->add_option("--basis", rec_basis, "Basis file")->required();
  recover_cmd->add_option("--oracle", rec_oracle, "local:SEED:TARGET_FILE or http://host:port")->required();
  recover_cmd->add_option("--id", rec_id, "Identity to recover")->required();
  recover_cmd->add_option("--out-image", rec_image, "Recovered image (.pgm/.ppm)")->required();
  recover_cmd->add_option("--out-trajectory", rec_traj, "Trajectory CSV");
  add_recovery_options(recover_cmd, rec_cfg, rec_accept);
  add_embedder_options(recover_cmd, rec_embedder);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Attack every target and score results with a critic");
  std::string eval_targets, eval_basis, eval_out, eval_recovered_dir, eval_accept = "monotone";
  std::uint64_t attacked_seed = 1, critic_seed = 2;
  RecoveryConfig eval_cfg;
  EmbedderFlags eval_embedder;
  eval_cmd->add_option("--targets", eval_targets, "Directory of target images")->required();
  eval_cmd->add_option("--basis", eval_basis, "Basis file")->required();
  eval_cmd->add_option("--out", eval_out, "Report CSV")->required();
  eval_cmd->add_option("--attacked-seed", attacked_seed, "Seed of the attacked embedder");
  eval_cmd->add_option("--critic-seed", critic_seed, "Seed of the critic embedder");
  eval_cmd->add_option("--recovered-dir", eval_recovered_dir, "Write recovered images here");
  add_recovery_options(eval_cmd, eval_cfg, eval_accept);
  add_embedder_options(eval_cmd, eval_embedder);

  // ablation
  auto* abl_cmd = app.add_subcommand("ablation", "Evaluate several bases under several restart settings");
  std::string abl_targets, abl_out, abl_accept = "monotone";
  std::map<std::string, std::string> abl_bases;
  std::vector<int> abl_restarts{0, 10};
  std::uint64_t abl_attacked_seed = 1, abl_critic_seed = 2;
  RecoveryConfig abl_cfg;
  EmbedderFlags abl_embedder;
  abl_cmd->add_option("--targets", abl_targets, "Directory of target images")->required();
  abl_cmd->add_option("--out", abl_out, "Ablation CSV")->required();
  for (const char* name : {"sl", "sr", "gr", "sr-gr"}) {
    abl_cmd->add_option(std::string("--basis-") + name, abl_bases[name], std::string("Basis trained with ") + name);
  }
  abl_cmd->add_option("--restart-settings", abl_restarts, "Comma-separated restart counts")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  abl_cmd->add_option("--attacked-seed", abl_attacked_seed, "Seed of the attacked embedder");
  abl_cmd->add_option("--critic-seed", abl_critic_seed, "Seed of the critic embedder");
  add_recovery_options(abl_cmd, abl_cfg, abl_accept);
  add_embedder_options(abl_cmd, abl_embedder);

  // serve-oracle
  auto* serve_cmd = app.add_subcommand("serve-oracle", "Serve a similarity oracle over HTTP");
  std::string serve_geometry, serve_embedder = "random", serve_bind = "127.0.0.1:8080";
  std::uint64_t serve_seed = 0, serve_budget = 0;
  std::vector<std::string> serve_enroll;
  EmbedderFlags serve_embed;
  serve_cmd->add_option("--basis-geometry", serve_geometry, "Image geometry WxHxC")->required();
  serve_cmd->add_option("--embedder", serve_embedder, "Embedder kind")->check(CLI::IsMember({"random"}));
  serve_cmd->add_option("--seed", serve_seed, "Embedder seed")->envname("FACET_SEED");
  serve_cmd->add_option("--budget", serve_budget, "Query limit (0 = unlimited)");
  serve_cmd->add_option("--bind", serve_bind, "host:port (port 0 picks a free port)");
  serve_cmd->add_option("--enroll", serve_enroll, "ID=FILE, repeatable or comma-separated")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  add_embedder_options(serve_cmd, serve_embed);

  for (auto* sub : app.get_subcommands({})) {
    sub->add_option("--config", "key=value settings file (flags on the command line take precedence)");
  }

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = expand_config(app, std::move(args));
    std::vector<const char*> cargs;
    for (const auto& a : args) cargs.push_back(a.c_str());
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InputError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  }

  try {
    if (synth->parsed()) {
      const Geometry g = parse_geometry(synth_geometry);
      const FaceGenerator faces(g, synth_model_seed);
      auto images = faces.sample_many(synth_count, synth_seed);
      if (synth_reflect) images = augment_with_reflections(images);
      fs::create_directories(synth_out);
      const char* ext = g.channels == 3 ? ".ppm" : ".pgm";
      for (std::size_t i = 0; i < images.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "face_%05zu", i);
        write_image(images[i], fs::path(synth_out) / (std::string(name) + ext));
      }
      write_sidecar(synth, fs::path(synth_out) / "faces");
      std::cout << "wrote " << images.size() << " images to " << synth_out << "\n";

    } else if (train_cmd->parsed()) {
      train_cfg.symmetry_on = !no_symmetry;
      train_cfg.generative_on = !no_generative;
      train_cfg.validate();
      const auto data = load_images(train_data);
      const TrainResult result = train_autoencoder(data, train_cfg);
      save_basis(result.basis, train_out);
      const fs::path loss_path = train_loss_csv.empty() ? fs::path(train_out + ".loss.csv") : fs::path(train_loss_csv);
      std::ofstream loss(loss_path);
      if (!loss) throw InputError("cannot write '" + loss_path.string() + "'");
      loss << "epoch,loss\n";
      char line[64];
      for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
        std::snprintf(line, sizeof line, "%zu,%.17g\n", e + 1, result.epoch_loss[e]);
        loss << line;
      }
      write_sidecar(train_cmd, train_out);
      std::cout << result.basis.geometry().to_string() << " k=" << result.basis.k() << " loss="
                << result.epoch_loss.back() << " asymmetry=" << mean_column_asymmetry(result.basis) << "\n";

    } else if (recover_cmd->parsed()) {
      rec_cfg.accept_mode = parse_accept_mode(rec_accept);
      rec_cfg.validate();
      const EigenBasis basis = load_basis(rec_basis);
      auto oracle = open_oracle(rec_oracle, rec_id, rec_embedder);
      const RecoveryResult result = recover_multistart(*oracle, rec_id, basis, rec_cfg);
      write_image(result.image, rec_image);
      if (!rec_traj.empty()) write_trajectory_csv(result.trajectory, rec_traj);
      write_sidecar(recover_cmd, rec_image);
      std::printf("final_score=%.6f best_score=%.6f queries=%llu restart=%d\n", result.final_score, result.best_score,
                  static_cast<unsigned long long>(result.total_queries), result.chosen_restart);
      if (result.budget_exhausted) throw PartialRun{};

    } else if (eval_cmd->parsed()) {
      eval_cfg.accept_mode = parse_accept_mode(eval_accept);
      eval_cfg.validate();
      const EigenBasis basis = load_basis(eval_basis);
      const auto targets = load_targets(eval_targets);
      RandomEmbedder attacked(attacked_seed, basis.geometry(), eval_embedder.options());
      RandomEmbedder critic(critic_seed, basis.geometry(), eval_embedder.options());
      std::vector<Image> recovered;
      const std::string fp = "attacked_seed=" + std::to_string(attacked_seed) +
                             ";critic_seed=" + std::to_string(critic_seed) + ";k=" + std::to_string(basis.k()) +
                             ";accept=" + eval_accept + ";seed=" + std::to_string(eval_cfg.seed);
      const EvalReport report = evaluate(targets, attacked, critic, basis, eval_cfg, fp, &recovered);
      write_report_csv(report, eval_out);
      if (!eval_recovered_dir.empty()) {
        fs::create_directories(eval_recovered_dir);
        const char* ext = basis.geometry().channels == 3 ? ".ppm" : ".pgm";
        for (std::size_t i = 0; i < targets.size(); ++i)
          write_image(recovered[i], fs::path(eval_recovered_dir) / (targets[i].name + ext));
      }
      write_sidecar(eval_cmd, eval_out);
      std::printf("targets=%zu attacked=%.4f±%.4f critic=%.4f±%.4f queries=%.0f\n", report.n_targets,
                  report.attacked_mean, report.attacked_std, report.critic_mean, report.critic_std,
                  report.mean_queries);

    } else if (abl_cmd->parsed()) {
      abl_cfg.accept_mode = parse_accept_mode(abl_accept);
      abl_cfg.validate();
      const std::map<std::string, LossTerms> terms{
          {"sl", LossTerms::sl()}, {"sr", LossTerms::sr()}, {"gr", LossTerms::gr()}, {"sr-gr", LossTerms::sr_gr()}};
      std::vector<std::pair<LossTerms, EigenBasis>> variants;
      for (const char* name : {"sl", "sr", "gr", "sr-gr"}) {
        if (!abl_bases[name].empty()) variants.emplace_back(terms.at(name), load_basis(abl_bases[name]));
      }
      if (variants.empty()) throw UsageError("ablation needs at least one --basis-* file");
      for (int r : abl_restarts) {
        RecoveryConfig c = abl_cfg;
        c.restarts = r;
        c.validate();
      }
      const auto targets = load_targets(abl_targets);
      const Geometry g = variants.front().second.geometry();
      RandomEmbedder attacked(abl_attacked_seed, g, abl_embedder.options());
      RandomEmbedder critic(abl_critic_seed, g, abl_embedder.options());
      const auto cells = ablation(targets, variants, abl_restarts, attacked, critic, abl_cfg);
      std::ofstream out(abl_out);
      if (!out) throw InputError("cannot write '" + abl_out + "'");
      out << ablation_csv(cells);
      out.close();
      write_sidecar(abl_cmd, abl_out);
      std::cout << ablation_csv(cells);

    } else if (serve_cmd->parsed()) {
      const Geometry g = parse_geometry(serve_geometry);
      auto embedder = std::make_shared<RandomEmbedder>(serve_seed, g, serve_embed.options());
      for (const auto& entry : serve_enroll) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--enroll expects ID=FILE, got '" + entry + "'");
        embedder->enroll(entry.substr(0, eq), read_image(entry.substr(eq + 1)));
      }
      std::shared_ptr<SimilarityOracle> oracle = std::make_shared<QuantizingOracle>(embedder);
      if (serve_budget > 0) oracle = with_budget(oracle, serve_budget);
      auto service = serve(oracle, serve_bind, g);
      std::cout << "listening on " << service->endpoint() << std::endl;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      service->stop();
      std::cout << "served " << oracle->queries_used() << " queries\n";
    }
  } catch (const PartialRun&) {
    std::cerr << "budget exhausted: the oracle refused further queries; outputs are partial\n";
    return kExitBudget;
  } catch (const BudgetExhaustedError& e) {
    std::cerr << "budget exhausted: " << e.what() << "\n";
    return kExitBudget;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UnknownIdentityError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InputError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const TransportError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
