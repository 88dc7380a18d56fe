#include "uhal/cli/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "uhal/codec/baselines.hpp"
#include "uhal/codec/container.hpp"
#include "uhal/codec/jpeg_segments.hpp"
#include "uhal/codec/recover.hpp"
#include "uhal/core/error.hpp"
#include "uhal/core/parallel.hpp"
#include "uhal/data/dataset.hpp"
#include "uhal/data/image_io.hpp"
#include "uhal/train/finetune.hpp"
#include "uhal/train/metrics.hpp"
#include "uhal/train/pretrain.hpp"

namespace uhal::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Options shared by the commands that train.
struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t threads = 0;
};

// A run configuration file holds TrainConfig keys plus "arch" and "modality".
struct RunConfig {
  train::TrainConfig train;
  models::ArchDescriptor arch;
  codec::Modality modality = codec::Modality::NaturalSr;
};

RunConfig load_run_config(const Common& c, train::Phase phase) {
  RunConfig rc;
  rc.train.phase = phase;
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw DataError("cannot open config " + c.config);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw DataError("config " + c.config + ": " + e.what());
    }
    if (!j.is_object()) throw DataError("config " + c.config + " must be a JSON object");
    json train_keys = json::object();
    for (const auto& [k, v] : j.items()) {
      if (k == "arch") {
        rc.arch = models::arch_from_json(v);
      } else if (k == "modality") {
        rc.modality = codec::parse_modality(v.get<std::string>());
      } else if (train::is_train_config_key(k)) {
        train_keys[k] = v;
      } else {
        throw DataError("unknown config key '" + k + "'");
      }
    }
    rc.train = train::train_config_from_json(train_keys, rc.train);
  }
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    const std::string key = o.substr(0, eq);
    if (key == "modality" && eq != std::string::npos) {
      rc.modality = codec::parse_modality(o.substr(eq + 1));
    } else if (key.rfind("arch.", 0) == 0 && eq != std::string::npos) {
      json a = models::to_json(rc.arch);
      json v = json::parse(o.substr(eq + 1), nullptr, false);
      a[key.substr(5)] = v.is_discarded() ? json(o.substr(eq + 1)) : v;
      if (key == "arch.k" && !v.is_discarded() && v.is_number()) {
        a["input_mode"] = v.get<int>() == 0 ? "xy" : "latent_xy";
      }
      rc.arch = models::arch_from_json(a);
    } else {
      train::apply_override(rc.train, o);
    }
  }
  if (c.seed_set) rc.train.seed = c.seed;
  rc.train.phase = phase;
  rc.train.validate();
  return rc;
}

void echo_config(const fs::path& dir, const std::string& command, const json& extra) {
  fs::create_directories(dir);
  json j = extra;
  j["command"] = command;
  j["threads"] = core::thread_count();
  std::ofstream(dir / "resolved_config.json") << j.dump(2) << '\n';
}

json run_config_json(const RunConfig& rc) {
  json j = train::to_json(rc.train);
  j["arch"] = models::to_json(rc.arch);
  j["modality"] = codec::to_string(rc.modality);
  return j;
}

data::PairedDataset load_data(const fs::path& dir) {
  if (fs::is_regular_file(dir)) return data::load_manifest(dir);
  if (fs::exists(dir / "manifest.json")) return data::load_manifest(dir / "manifest.json");
  return data::load_pairs(dir / "authentic", dir / "hallucinated");
}

std::vector<std::size_t> split_indices(const data::PairedDataset& ds, const fs::path& dir, const std::string& which) {
  std::vector<std::size_t> all(ds.pairs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  if (which == "all") return all;
  const fs::path split_file = fs::is_directory(dir) ? dir / "split.json" : dir.parent_path() / "split.json";
  if (!fs::exists(split_file)) return all;
  std::ifstream in(split_file);
  const json j = json::parse(in);
  if (!j.contains(which)) throw DataError("split file has no '" + which + "' list");
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) by_id[ds.pairs[i].id] = i;
  std::vector<std::size_t> out;
  for (const auto& id : j.at(which)) {
    const auto it = by_id.find(id.get<std::string>());
    if (it == by_id.end()) throw DataError("split lists unknown id '" + id.get<std::string>() + "'");
    out.push_back(it->second);
  }
  return out;
}

models::RecoveryModel<float> load_checkpoint(const fs::path& path) {
  const auto bytes = data::read_file(path);
  const auto c = codec::deserialize_container(bytes);
  if (!c.include_encoder && c.arch.has_encoder()) {
    throw MetadataError(MetadataError::Kind::ArchMismatch, path.string() + " holds no encoder weights");
  }
  return codec::model_from_container(c);
}

bool is_jpeg(const fs::path& p) {
  const auto b = data::read_file(p);
  return b.size() >= 2 && b[0] == 0xFF && b[1] == 0xD8;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

// ---- commands ------------------------------------------------------------

int cmd_synth(const fs::path& out, std::size_t count, std::size_t height, std::size_t width, const std::string& mode,
              float strength, std::uint64_t seed, const std::vector<double>& ratios, std::ostream& log) {
  data::SynthHallucinationParams p;
  p.mode = data::parse_synth_mode(mode);
  p.strength = strength;
  auto ds = data::synth_dataset(count, height, width, p, seed);
  data::split(ds, {ratios.at(0), ratios.at(1), ratios.at(2)}, seed);
  data::save_pairs(ds, out / "authentic", out / "hallucinated");
  json manifest{{"modality", ds.modality}, {"surrogate", true}, {"pairs", json::array()}};
  for (const auto& s : ds.pairs) {
    manifest["pairs"].push_back({{"id", s.id},
                                 {"authentic", "authentic/" + s.id + ".png"},
                                 {"hallucinated", "hallucinated/" + s.id + ".png"}});
  }
  std::ofstream(out / "manifest.json") << manifest.dump(2) << '\n';
  auto ids = [&](const std::vector<std::size_t>& idx) {
    json a = json::array();
    for (auto i : idx) a.push_back(ds.pairs[i].id);
    return a;
  };
  std::ofstream(out / "split.json") << json{{"train", ids(ds.train)}, {"val", ids(ds.val)}, {"test", ids(ds.test)}}.dump(2)
                                    << '\n';
  echo_config(out, "synth",
              {{"count", count}, {"height", height}, {"width", width}, {"mode", mode}, {"strength", strength},
               {"seed", seed}, {"ratios", ratios}});
  log << "wrote " << count << " surrogate pairs (" << mode << ") to " << out.string() << '\n';
  return kOk;
}

int cmd_pretrain(const fs::path& data_dir, const fs::path& out, const std::string& split, const Common& c,
                 std::ostream& log) {
  const RunConfig rc = load_run_config(c, train::Phase::Pretrain);
  const auto ds = load_data(data_dir);
  const auto train_pairs = data::select(ds, split_indices(ds, data_dir, split));
  echo_config(out, "pretrain", {{"data", data_dir.string()}, {"split", split}, {"config", run_config_json(rc)}});
  models::RecoveryModel<float> model(rc.arch, rc.train.seed);
  const auto res = train::pretrain(model, train_pairs, rc.train);
  const auto bytes = codec::serialize_container(codec::make_container(model, rc.modality, true));
  data::write_file(out / "checkpoint.uhal", bytes);
  std::ofstream loss(out / "loss.csv");
  train::write_loss_csv(loss, res.loss_history);
  log << "pretrained " << res.steps << " steps on " << train_pairs.size() << " pairs in " << fmt(res.seconds)
      << " s; loss " << fmt(res.loss_history.front()) << " -> " << fmt(res.loss_history.back()) << '\n';
  return kOk;
}

int cmd_finetune(const fs::path& checkpoint, const fs::path& authentic, const fs::path& hallucinated,
                 const fs::path& out, bool embed, bool no_encoder, const Common& c, std::ostream& log) {
  RunConfig rc = load_run_config(c, train::Phase::Finetune);
  auto model = load_checkpoint(checkpoint);
  train::PairedSample pair;
  pair.id = hallucinated.stem().string();
  pair.x = data::read_image(authentic);
  pair.y = data::read_image(hallucinated);
  if (pair.x.shape() != pair.y.shape()) {
    throw DataError("size mismatch: " + authentic.string() + " vs " + hallucinated.string());
  }
  echo_config(out, "finetune",
              {{"checkpoint", checkpoint.string()}, {"authentic", authentic.string()},
               {"hallucinated", hallucinated.string()}, {"embed", embed}, {"no_encoder", no_encoder},
               {"config", run_config_json(rc)}});
  std::vector<std::uint8_t> mask;
  if (rc.train.sampling == train::SamplingMode::Mask) {
    mask = codec::mask_metadata(pair.x, pair.y, static_cast<float>(rc.train.mask_threshold)).mask;
  }
  const auto res = train::finetune(model, pair, rc.train, mask.empty() ? nullptr : &mask);
  const auto modality = codec::deserialize_container(data::read_file(checkpoint)).modality;
  const auto bytes = codec::serialize_container(codec::make_container(model, modality, !no_encoder));
  data::write_file(out / (pair.id + ".uhal"), bytes);
  std::ofstream trace(out / "trace.csv");
  train::write_trace_csv(trace, res.trace);
  if (embed) {
    if (!is_jpeg(hallucinated)) throw DataError("--embed needs a JPEG hallucinated image: " + hallucinated.string());
    const auto jpeg = data::read_file(hallucinated);
    data::write_file(out / (pair.id + ".jpg"), codec::jpeg_embed(jpeg, bytes));
  }
  log << "finetuned " << res.iterations_run << " iterations: PSNR " << fmt(res.psnr_start) << " -> "
      << fmt(res.psnr_end) << " dB; container " << bytes.size() << " bytes\n";
  return kOk;
}

int cmd_embed(const fs::path& jpeg, const fs::path& container, const fs::path& out, std::ostream& log) {
  const auto c = data::read_file(container);
  codec::deserialize_container(c);
  const auto embedded = codec::jpeg_embed(data::read_file(jpeg), c);
  data::write_file(out, embedded);
  log << "embedded " << c.size() << " bytes in " << codec::chunk_count(c.size()) << " APP11 chunks\n";
  return kOk;
}

int cmd_recover(const fs::path& in, const fs::path& out, const std::string& sidecar, const std::string& checkpoint,
                std::ostream& log) {
  const auto bytes = data::read_file(in);
  std::vector<std::uint8_t> container;
  if (!sidecar.empty()) {
    container = data::read_file(sidecar);
  } else {
    if (bytes.size() < 2 || bytes[0] != 0xFF || bytes[1] != 0xD8) {
      throw DataError(in.string() + " is not a JPEG; pass --container for a sidecar file");
    }
    container = codec::jpeg_extract(bytes);
  }
  const auto y = data::read_image(in);
  std::optional<models::RecoveryModel<float>> base;
  if (!checkpoint.empty()) base.emplace(load_checkpoint(checkpoint));
  const auto xhat = codec::recover(y, container, base ? &*base : nullptr);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  data::write_png(out, xhat);
  log << "recovered " << y.dim(0) << "x" << y.dim(1) << " image to " << out.string() << '\n';
  return kOk;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& data_dir, const fs::path& out, const std::string& split,
             bool finetune_each, const Common& c, std::ostream& log) {
  const RunConfig rc = load_run_config(c, train::Phase::Finetune);
  const auto base = load_checkpoint(checkpoint);
  const auto ds = load_data(data_dir);
  const auto idx = split_indices(ds, data_dir, split);
  echo_config(out, "eval",
              {{"checkpoint", checkpoint.string()}, {"data", data_dir.string()}, {"split", split},
               {"finetune", finetune_each}, {"config", run_config_json(rc)}});
  std::ofstream csv(out / "psnr.csv");
  csv << "id,psnr_y,psnr_zero_shot" << (finetune_each ? ",psnr_finetuned" : "") << '\n';
  double sy = 0, sz = 0, sf = 0;
  for (auto i : idx) {
    const auto& p = ds.pairs[i];
    const double py = train::psnr(p.y, p.x);
    const double pz = train::recovery_psnr(base, p);
    csv << p.id << ',' << fmt(py) << ',' << fmt(pz);
    sy += py;
    sz += pz;
    if (finetune_each) {
      auto m = base;
      const double pf = train::finetune(m, p, rc.train).psnr_end;
      csv << ',' << fmt(pf);
      sf += pf;
    }
    csv << '\n';
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, idx.size()));
  csv << "mean," << fmt(sy / n) << ',' << fmt(sz / n);
  if (finetune_each) csv << ',' << fmt(sf / n);
  csv << '\n';
  log << "evaluated " << idx.size() << " pairs: mean PSNR y " << fmt(sy / n) << " dB, recovered " << fmt(sz / n)
      << " dB" << (finetune_each ? ", finetuned " + fmt(sf / n) + " dB" : "") << '\n';
  return kOk;
}

int cmd_compare(const std::string& checkpoint, const fs::path& data_dir, const fs::path& out, const std::string& split,
                std::uint64_t budget_iters, double budget_seconds, const std::vector<std::string>& methods,
                std::size_t limit, const Common& c, std::ostream& log) {
  RunConfig rc = load_run_config(c, train::Phase::Finetune);
  rc.train.iterations = budget_iters;
  rc.train.time_budget_seconds = budget_seconds;
  const auto ds = load_data(data_dir);
  auto idx = split_indices(ds, data_dir, split);
  if (limit > 0 && idx.size() > limit) idx.resize(limit);
  if (idx.empty()) throw DataError("compare: no pairs selected");
  std::optional<models::RecoveryModel<float>> ours;
  echo_config(out, "compare",
              {{"checkpoint", checkpoint}, {"data", data_dir.string()}, {"split", split},
               {"budget_iters", budget_iters}, {"budget_seconds", budget_seconds}, {"methods", methods},
               {"limit", limit}, {"config", run_config_json(rc)}});

  std::ofstream detail(out / "compare_images.csv");
  detail << "method,id,budget_iters,budget_s,psnr_y,psnr_zero_shot,psnr\n";
  std::ofstream summary(out / "compare.csv");
  summary << "method,budget_iters,budget_s,psnr,psnr_zero_shot,psnr_y,images\n";
  for (const auto& method : methods) {
    double s_y = 0, s_z = 0, s_f = 0, s_t = 0;
    for (auto i : idx) {
      const auto& p = ds.pairs[i];
      std::optional<models::RecoveryModel<float>> m;
      if (method == "ours") {
        if (checkpoint.empty()) throw DataError("compare: method 'ours' needs --checkpoint");
        if (!ours) ours.emplace(load_checkpoint(checkpoint));
        m.emplace(*ours);
      } else {
        const auto mode = models::InputMode::XyRgb;
        models::ArchDescriptor a;
        if (method == "siren") a = models::ArchDescriptor::siren(mode);
        else if (method == "nerf_pe") a = models::ArchDescriptor::nerf_pe(mode);
        else if (method == "hashgrid") a = models::ArchDescriptor::hashgrid(mode);
        else throw DataError("compare: unknown method '" + method + "'");
        m.emplace(a, rc.train.seed);
      }
      const auto r = train::finetune(*m, p, rc.train);
      const double py = train::psnr(p.y, p.x);
      detail << method << ',' << p.id << ',' << r.iterations_run << ',' << fmt(r.seconds) << ',' << fmt(py) << ','
             << fmt(r.psnr_start) << ',' << fmt(r.psnr_end) << '\n';
      s_y += py;
      s_z += r.psnr_start;
      s_f += r.psnr_end;
      s_t += r.seconds;
    }
    const double n = static_cast<double>(idx.size());
    summary << method << ',' << budget_iters << ',' << fmt(s_t / n) << ',' << fmt(s_f / n) << ',' << fmt(s_z / n)
            << ',' << fmt(s_y / n) << ',' << idx.size() << '\n';
    log << method << ": mean PSNR " << fmt(s_f / n) << " dB (zero-shot " << fmt(s_z / n) << ", y " << fmt(s_y / n)
        << ")\n";
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Metadata-assisted recovery of unhallucinated images"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON config (TrainConfig keys, \"arch\", \"modality\")");
    sub->add_option("--set", common.overrides, "key=value override; arch.<key>=value edits the arch");
    sub->add_option("--seed", common.seed, "RNG seed")->each([&](const std::string&) { common.seed_set = true; });
    sub->add_option("--threads", common.threads, "Worker threads (default UHAL_THREADS or all cores)");
  };

  std::string out_dir, data_dir, split, checkpoint, authentic, hallucinated, in, container, sidecar;
  std::string mode = "detail_inject";
  std::size_t count = 20, height = 64, width = 64, limit = 0;
  float strength = 0.5f;
  std::vector<double> ratios{0.8, 0.1, 0.1};
  bool embed = false, no_encoder = false, finetune_each = false;
  std::uint64_t budget_iters = 1000;
  double budget_seconds = 0.0;
  std::vector<std::string> methods{"ours", "siren", "nerf_pe", "hashgrid"};

  auto* synth = app.add_subcommand("synth", "Generate a surrogate paired dataset");
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--count", count, "Number of pairs");
  synth->add_option("--height", height, "Image height");
  synth->add_option("--width", width, "Image width");
  synth->add_option("--mode", mode, "detail_inject | glyph_swap | lowlight_enhance");
  synth->add_option("--strength", strength, "Hallucination strength in [0, 1]");
  synth->add_option("--ratios", ratios, "train val test ratios")->expected(3);
  synth->add_option("--seed", common.seed, "RNG seed");
  synth->add_option("--threads", common.threads, "Worker threads");

  auto* pre = app.add_subcommand("pretrain", "Pretrain encoder and head on a paired dataset");
  pre->add_option("--data", data_dir, "Dataset directory or manifest")->required();
  pre->add_option("--out", out_dir, "Output directory")->required();
  pre->add_option("--split", split, "train (default) | val | test | all");
  add_common(pre);

  auto* ft = app.add_subcommand("finetune", "Finetune the head on one pair and write its container");
  ft->add_option("--checkpoint", checkpoint, "Pretrained checkpoint")->required();
  ft->add_option("--authentic", authentic, "Authentic image x")->required();
  ft->add_option("--hallucinated", hallucinated, "Hallucinated image y")->required();
  ft->add_option("--out", out_dir, "Output directory")->required();
  ft->add_flag("--embed", embed, "Also write y with the container embedded (y must be a JPEG)");
  ft->add_flag("--no-encoder", no_encoder, "Store only the head weights");
  add_common(ft);

  auto* em = app.add_subcommand("embed", "Embed a container into a JPEG");
  em->add_option("--jpeg", in, "Input JPEG")->required();
  em->add_option("--container", container, "Container file")->required();
  em->add_option("--out", out_dir, "Output JPEG")->required();

  auto* rec = app.add_subcommand("recover", "Recover x_hat from a JPEG with embedded metadata");
  rec->add_option("--in", in, "Input image")->required();
  rec->add_option("--out", out_dir, "Output PNG")->required();
  rec->add_option("--container", sidecar, "Sidecar container instead of embedded metadata");
  rec->add_option("--checkpoint", checkpoint, "Pretrained checkpoint for head-only containers");
  rec->add_option("--threads", common.threads, "Worker threads");

  auto* ev = app.add_subcommand("eval", "Write a PSNR table over a split");
  ev->add_option("--checkpoint", checkpoint, "Pretrained checkpoint")->required();
  ev->add_option("--data", data_dir, "Dataset directory or manifest")->required();
  ev->add_option("--out", out_dir, "Output directory")->required();
  ev->add_option("--split", split, "test (default) | train | val | all");
  ev->add_flag("--finetune", finetune_each, "Finetune per image and report that PSNR too");
  add_common(ev);

  auto* cmp = app.add_subcommand("compare", "Compare methods under equal budgets");
  cmp->add_option("--checkpoint", checkpoint, "Pretrained checkpoint for 'ours'");
  cmp->add_option("--data", data_dir, "Dataset directory or manifest")->required();
  cmp->add_option("--out", out_dir, "Output directory")->required();
  cmp->add_option("--split", split, "test (default) | train | val | all");
  cmp->add_option("--budget-iters", budget_iters, "Finetuning iterations per method");
  cmp->add_option("--budget-seconds", budget_seconds, "Optional wall-clock cap per image");
  cmp->add_option("--methods", methods, "Subset of ours siren nerf_pe hashgrid");
  cmp->add_option("--limit", limit, "Use at most this many pairs");
  add_common(cmp);

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (common.threads > 0) core::set_thread_count(common.threads);
    if (!split.empty() && split != "train" && split != "val" && split != "test" && split != "all") {
      err << "usage error: --split must be train, val, test or all\n";
      return kUsage;
    }
    if (*synth) return cmd_synth(out_dir, count, height, width, mode, strength, common.seed, ratios, out);
    if (*pre) return cmd_pretrain(data_dir, out_dir, split.empty() ? "train" : split, common, out);
    if (*ft) return cmd_finetune(checkpoint, authentic, hallucinated, out_dir, embed, no_encoder, common, out);
    if (*em) return cmd_embed(in, container, out_dir, out);
    if (*rec) return cmd_recover(in, out_dir, sidecar, checkpoint, out);
    if (*ev) return cmd_eval(checkpoint, data_dir, out_dir, split.empty() ? "test" : split, finetune_each, common, out);
    if (*cmp) return cmd_compare(checkpoint, data_dir, out_dir, split.empty() ? "test" : split, budget_iters,
                                 budget_seconds, methods, limit, common, out);
  } catch (const MetadataError& e) {
    err << "metadata error: " << e.what() << '\n';
    return kMetadataError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const json::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace uhal::cli
