#include "eqmesh/commands.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "eqmesh/audit.hpp"
#include "eqmesh/config.hpp"
#include "eqmesh/image.hpp"
#include "eqmesh/losses.hpp"
#include "eqmesh/synth.hpp"
#include "eqmesh/train.hpp"

namespace eqmesh {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// "--a.b v", "--a.b=v" and "a.b=v" all become "a.b=v".
std::vector<std::string> collect_overrides(const std::vector<std::string>& extras) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.rfind("--", 0) == 0) {
      const std::string body = tok.substr(2);
      if (body.empty()) throw UsageError("stray '--'");
      if (body.find('=') != std::string::npos) {
        out.push_back(body);
      } else {
        if (i + 1 >= extras.size()) throw UsageError("option --" + body + " needs a value");
        out.push_back(body + "=" + extras[++i]);
      }
    } else if (tok.find('=') != std::string::npos) {
      out.push_back(tok);
    } else {
      throw UsageError("unexpected argument '" + tok + "' (expected key=value)");
    }
  }
  return out;
}

void require(const std::string& value, const std::string& what) {
  if (value.empty()) throw UsageError("missing " + what);
}

std::unique_ptr<MeshModel> load_model(const RunConfig& cfg, bool need_checkpoint) {
  auto model = make_model(cfg.model, cfg.seed);
  if (need_checkpoint) require(cfg.checkpoint, "checkpoint (set checkpoint=PATH)");
  if (!cfg.checkpoint.empty()) load_checkpoint(model->params(), cfg.checkpoint);
  return model;
}

std::string fixed(double v, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

int cmd_gen_data(const RunConfig& cfg, std::ostream& out) {
  require(cfg.out, "--out");
  DatasetOptions opts;
  opts.n_train = cfg.data.n_train;
  opts.n_val = cfg.data.n_val;
  opts.seed = cfg.seed;
  opts.image_size = cfg.model.image_size;
  opts.rotations = cfg.data.rotations;
  // The dataset should not depend on where it was written.
  RunConfig echoed = cfg;
  echoed.out.clear();
  opts.config_json = config_to_json(echoed).dump(2) + "\n";
  build_dataset(cfg.out, opts);
  out << nlohmann::json{{"dataset", cfg.out}, {"n_train", opts.n_train}, {"n_val", opts.n_val}}.dump() << '\n';
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  require(cfg.out, "--out");
  require(cfg.data.dir, "data.dir");
  echo_config(cfg, fs::path(cfg.out) / "config.json");
  const auto data = load_split(cfg.data.dir, "train");
  auto model = load_model(cfg, false);
  TrainOutputs outputs;
  outputs.dir = cfg.out;
  outputs.on_epoch = [&out](const EpochMetrics& m) {
    out << nlohmann::json{{"epoch", m.epoch}, {"lv", m.lv}, {"ll", m.ll}, {"loss", m.loss}, {"lr", m.lr},
                          {"wall_time", m.wall_time}}
               .dump()
        << std::endl;
  };
  train(*model, data, cfg.train, outputs);
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  require(cfg.data.dir, "data.dir");
  if (!cfg.out.empty()) echo_config(cfg, fs::path(cfg.out) / "config.json");
  auto model = load_model(cfg, true);
  const auto data = load_split(cfg.data.dir, cfg.eval.split);
  const auto rows = evaluate(*model, data, cfg.eval.angles, cfg.eval.batch_size);

  std::ostringstream lines;
  for (const auto& r : rows)
    lines << nlohmann::json{{"angle", r.angle_deg}, {"mean_mm", r.mean_mm}, {"n", r.n}}.dump() << '\n';
  out << lines.str();
  out << "\n angle   mean_mm     n\n";
  for (const auto& r : rows)
    out << std::setw(6) << r.angle_deg << std::setw(10) << fixed(r.mean_mm, 2) << std::setw(6) << r.n << '\n';
  if (!cfg.out.empty()) {
    std::ofstream os(fs::path(cfg.out) / "eval.jsonl", std::ios::trunc);
    os << lines.str();
    if (!os.flush()) throw std::runtime_error("cannot write eval.jsonl");
  }
  return kExitOk;
}

int cmd_audit(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.out.empty()) echo_config(cfg, fs::path(cfg.out) / "config.json");
  auto model = load_model(cfg, false);
  Tensor images;
  double fill = 0.0;
  if (!cfg.data.dir.empty()) {
    const auto data = load_split(cfg.data.dir, cfg.eval.split);
    std::vector<const Tensor*> ptrs;
    for (std::size_t i = 0; i < data.size() && static_cast<int>(i) < cfg.audit.batch_size; ++i)
      ptrs.push_back(&data.samples[i].image);
    images = stack_images(ptrs);
    fill = 128.0 / 255.0;  // renderer background
  } else {
    images = smooth_disk_images(static_cast<std::size_t>(cfg.audit.batch_size),
                                static_cast<std::size_t>(cfg.model.image_size), cfg.seed);
  }
  const auto rows = audit_equivariance(*model, images, cfg.audit.angles, fill);
  std::ostringstream lines;
  for (const auto& r : rows)
    lines << nlohmann::json{{"stage", r.stage}, {"angle", r.angle_deg}, {"residual", r.residual},
                            {"vector_max", r.vector_max}}
                 .dump()
          << '\n';
  out << lines.str();
  out << "\n stage         angle      residual    vector_max\n";
  for (const auto& r : rows) {
    std::ostringstream a, b;
    a << std::scientific << std::setprecision(3) << r.residual;
    b << std::scientific << std::setprecision(3) << r.vector_max;
    out << ' ' << std::left << std::setw(12) << r.stage << std::right << std::setw(6) << r.angle_deg << std::setw(14)
        << a.str() << std::setw(14) << b.str() << '\n';
  }
  if (!cfg.out.empty()) {
    std::ofstream os(fs::path(cfg.out) / "audit.jsonl", std::ios::trunc);
    os << lines.str();
    if (!os.flush()) throw std::runtime_error("cannot write audit.jsonl");
  }
  return kExitOk;
}

int cmd_predict(const RunConfig& cfg, std::ostream& out) {
  require(cfg.image, "image (set --image PATH)");
  require(cfg.out, "--out");
  fs::path echo = cfg.out;
  echo.replace_extension(".config.json");
  echo_config(cfg, echo);
  auto model = load_model(cfg, true);

  std::shared_ptr<const MeshTopology> topo;
  if (!cfg.data.dir.empty()) {
    const auto data = read_obj_file(fs::path(cfg.data.dir) / "topology.obj");
    topo = std::make_shared<MeshTopology>(static_cast<int>(data.vertices.size()), data.faces);
  } else {
    topo = std::make_shared<const MeshTopology>(build_uv_sphere_topology());
  }
  if (topo->vertex_count() != cfg.model.vertex_count)
    throw std::runtime_error("topology has " + std::to_string(topo->vertex_count()) + " vertices, model outputs " +
                             std::to_string(cfg.model.vertex_count));

  const auto img = image_to_tensor(read_png(cfg.image));
  const auto pred = predict(*model, {&img}, 1);
  write_obj(unstack_mesh(pred, 0, topo), cfg.out);
  out << nlohmann::json{{"mesh", cfg.out}, {"vertices", topo->vertex_count()}}.dump() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rotation-equivariant image-to-mesh reconstruction", "eqmesh"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  std::string config_path, out_path;
  const char* verbs[][2] = {{"gen-data", "Generate a synthetic dataset"},
                            {"train", "Train a model on a dataset"},
                            {"eval", "Mesh error at fixed and rotated orientations"},
                            {"audit-equivariance", "Per-stage equivariance residuals"},
                            {"predict", "Reconstruct a mesh from one PNG image"}};
  std::vector<CLI::App*> subs;
  for (const auto& v : verbs) {
    auto* s = app.add_subcommand(v[0], v[1]);
    s->add_option("--config", config_path, "JSON config file");
    s->add_option("--out", out_path, "Output directory (or OBJ path for predict)");
    s->allow_extras();
    s->footer("Any config key can be set as key=value or --key value, e.g. train.epochs=50.");
    subs.push_back(s);
  }

  // The vector overload takes the arguments reversed, without argv[0].
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  CLI::App* sub = nullptr;
  for (auto* s : subs)
    if (s->parsed()) sub = s;

  RunConfig cfg;
  try {
    auto overrides = collect_overrides(sub->remaining());
    if (!out_path.empty()) overrides.insert(overrides.begin(), "out=" + out_path);
    cfg = load_config(config_path, overrides);
  } catch (const std::exception& e) {
    err << "eqmesh " << sub->get_name() << ": " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    const std::string verb = sub->get_name();
    if (verb == "gen-data") return cmd_gen_data(cfg, out);
    if (verb == "train") return cmd_train(cfg, out);
    if (verb == "eval") return cmd_eval(cfg, out);
    if (verb == "audit-equivariance") return cmd_audit(cfg, out);
    return cmd_predict(cfg, out);
  } catch (const UsageError& e) {
    err << "eqmesh " << sub->get_name() << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "eqmesh " << sub->get_name() << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "eqmesh " << sub->get_name() << ": error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace eqmesh
