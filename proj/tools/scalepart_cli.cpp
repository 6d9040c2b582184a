// Command-line driver: data generation and curation, two-stage training, evaluation, serving.

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "scalepart/checkpoint.hpp"
#include "scalepart/curation.hpp"
#include "scalepart/dataset_io.hpp"
#include "scalepart/decoder_training.hpp"
#include "scalepart/error.hpp"
#include "scalepart/inference.hpp"
#include "scalepart/model_bundle.hpp"
#include "scalepart/service.hpp"
#include "scalepart/synthetic.hpp"
#include "scalepart/validator.hpp"

namespace fs = std::filesystem;
using namespace scalepart;
using json = nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<data::AnnotatedCloud> load_inputs(const fs::path& input, std::size_t points, std::uint64_t seed) {
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(input);
  }
  std::vector<data::AnnotatedCloud> clouds;
  for (const auto& f : files) {
    const auto ext = f.extension().string();
    if (ext == ".pcpd") {
      auto records = data::dataset_read(f);
      for (auto& r : records) {
        r.source_id = f.stem().string() + "/" + r.source_id;
        clouds.push_back(std::move(r));
      }
    } else if (ext == ".obj") {
      auto cloud = data::sample_surface_proportional(data::read_obj(f.string()), points, seed + clouds.size());
      cloud.source_id = f.stem().string();
      clouds.push_back(std::move(cloud));
    }
  }
  return clouds;
}

std::unique_ptr<data::ValidatorModel> load_validator(const fs::path& path) {
  auto model = std::make_unique<data::ValidatorModel>();
  import_parameters(model->parameters(), read_checkpoint(path), "validator.");
  return model;
}

json report_json(const IoUReport& r, const json& config) {
  json objects = json::array();
  for (const auto& o : r.objects) objects.push_back({{"id", o.id}, {"miou", o.miou}, {"parts", o.parts}});
  return {{"dataset_miou", r.dataset_miou}, {"protocol", r.protocol}, {"per_object", objects}, {"config", config}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scale-aware point-prompted part segmentation"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate synthetic labeled shapes into a PCPD file");
  std::size_t gen_count = 100, gen_points = 2048;
  std::uint64_t gen_seed = 0;
  std::uint32_t gen_min = 2, gen_max = 8;
  std::string gen_out;
  gen->add_option("--count", gen_count, "Number of shapes");
  gen->add_option("--seed", gen_seed, "First shape seed; shape i uses seed + i");
  gen->add_option("--points", gen_points, "Points per shape");
  gen->add_option("--min-parts", gen_min);
  gen->add_option("--max-parts", gen_max);
  gen->add_option("--out", gen_out)->required();

  // train-validator
  auto* tv = app.add_subcommand("train-validator", "Train the annotation-quality classifier");
  std::string tv_data, tv_out;
  data::ValidatorConfig tv_cfg;
  double tv_fraction = 0.5;
  tv->add_option("--data", tv_data, "PCPD file of clean annotations")->required();
  tv->add_option("--out", tv_out)->required();
  tv->add_option("--epochs", tv_cfg.epochs);
  tv->add_option("--seed", tv_cfg.seed);
  tv->add_option("--corrupt-fraction", tv_fraction, "Label fraction shuffled in negatives");

  // curate
  auto* cur = app.add_subcommand("curate", "Normalize, quality-filter, refine and part-count filter");
  std::string cur_in, cur_out, cur_validator;
  data::CurationConfig cur_cfg;
  std::size_t cur_points = 2048;
  std::uint64_t cur_seed = 0;
  cur->add_option("--input", cur_in, "PCPD / OBJ file or a directory of them")->required();
  cur->add_option("--out", cur_out)->required();
  cur->add_option("--validator", cur_validator, "Validator checkpoint; quality filtering is skipped without it");
  cur->add_option("--threshold", cur_cfg.quality_threshold);
  cur->add_option("--eps-factor", cur_cfg.refine.eps_factor);
  cur->add_option("--min-pts", cur_cfg.refine.min_pts);
  cur->add_option("--points", cur_points, "Points sampled per OBJ mesh");
  cur->add_option("--seed", cur_seed);

  // train-encoder
  auto* te = app.add_subcommand("train-encoder", "Contrastive encoder training");
  std::string te_data, te_out = "encoder.s2am", te_log;
  EncoderTrainConfig te_cfg;
  EncoderConfig te_arch;
  std::uint64_t te_init_seed = 0;
  te->add_option("--data", te_data)->required();
  te->add_option("--out", te_out);
  te->add_option("--epochs", te_cfg.epochs);
  te->add_option("--lr", te_cfg.lr);
  te->add_option("--tau", te_cfg.tau);
  te->add_option("--anchors", te_cfg.anchors);
  te->add_option("--seed", te_cfg.seed);
  te->add_option("--init-seed", te_init_seed);
  te->add_option("--dim", te_arch.feature_dim);
  te->add_option("--resolution", te_arch.resolution);
  te->add_option("--log", te_log, "CSV of per-step losses");

  // train-decoder
  auto* td = app.add_subcommand("train-decoder", "Decoder training with the encoder frozen");
  std::string td_data, td_encoder, td_out = "model.s2am", td_csv = "decoder_loss.csv";
  DecoderTrainConfig td_cfg;
  std::uint64_t td_init_seed = 0;
  td->add_option("--data", td_data)->required();
  td->add_option("--encoder", td_encoder)->required();
  td->add_option("--out", td_out);
  td->add_option("--lr", td_cfg.lr);
  td->add_option("--epochs", td_cfg.epochs);
  td->add_option("--batch", td_cfg.batch);
  td->add_option("--drop", td_cfg.p_drop);
  td->add_option("--lambda-bce", td_cfg.loss.lambda_bce);
  td->add_option("--lambda-dice", td_cfg.loss.lambda_dice);
  td->add_option("--points-per-sample", td_cfg.points_per_sample);
  td->add_option("--seed", td_cfg.seed);
  td->add_option("--init-seed", td_init_seed);
  td->add_option("--loss-csv", td_csv);

  // eval
  auto* ev = app.add_subcommand("eval", "IoU evaluation");
  std::string ev_data, ev_ckpt, ev_mode = "interactive", ev_scale = "off", ev_report;
  FullSegConfig ev_full;
  bool ev_sweep = false;
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--ckpt", ev_ckpt)->required();
  ev->add_option("--mode", ev_mode)->check(CLI::IsMember({"interactive", "full"}));
  ev->add_option("--scale", ev_scale)->check(CLI::IsMember({"on", "off"}));
  ev->add_option("--theta", ev_full.theta);
  ev->add_option("--alpha-conf", ev_full.alpha_conf);
  ev->add_option("--k", ev_full.k);
  ev->add_option("--report", ev_report);
  ev->add_flag("--sweep", ev_sweep, "Also run the scale-perturbation sweep");

  // serve
  auto* sv = app.add_subcommand("serve", "HTTP JSON service");
  std::string sv_addr = "127.0.0.1:8080", sv_model, sv_dir;
  sv->add_option("--addr", sv_addr, "host:port");
  sv->add_option("--model", sv_model);
  sv->add_option("--shape-dir", sv_dir, "Directory where registered shapes are persisted as PCPD");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      data::SyntheticConfig cfg;
      cfg.min_parts = gen_min;
      cfg.max_parts = gen_max;
      std::vector<data::AnnotatedCloud> clouds;
      for (std::size_t i = 0; i < gen_count; ++i) clouds.push_back(data::synthetic_cloud(gen_seed + i, gen_points, cfg));
      data::dataset_write(clouds, gen_out);
      std::cout << "wrote " << clouds.size() << " shapes to " << gen_out << "\n";
    } else if (*tv) {
      const auto clean = data::dataset_read(tv_data);
      std::vector<data::AnnotatedCloud> negatives;
      for (std::size_t i = 0; i < clean.size(); ++i)
        negatives.push_back(data::corrupt_labels(clean[i], data::Corruption::Shuffle, tv_fraction, tv_cfg.seed + i));
      const auto trained = data::train_validator(clean, negatives, tv_cfg);
      write_checkpoint(tv_out, export_parameters(trained.model->parameters(), "validator."));
      std::cout << "held-out accuracy " << trained.heldout_accuracy << " on " << trained.heldout_count
                << " clouds; wrote " << tv_out << "\n";
    } else if (*cur) {
      const auto inputs = load_inputs(cur_in, cur_points, cur_seed);
      std::unique_ptr<data::ValidatorModel> validator;
      if (!cur_validator.empty()) validator = load_validator(cur_validator);
      data::CurationStats stats;
      const auto kept = data::curate(inputs, cur_cfg, validator.get(), &stats);
      data::dataset_write(kept, cur_out);
      std::cout << "input " << stats.input << ", after quality " << stats.after_quality << ", labels split "
                << stats.labels_split << ", kept " << stats.kept << (validator ? "" : " (quality filter skipped)")
                << "\n";
    } else if (*te) {
      const auto dataset = data::dataset_read(te_data);
      Encoder encoder(te_arch, te_init_seed);
      std::ofstream log;
      if (!te_log.empty()) {
        log.open(te_log);
        log << "epoch,step,loss\n";
        log.precision(17);
      }
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const auto result = train_encoder(encoder, dataset, te_cfg, [&](std::size_t e, std::size_t s, double l) {
          if (log) log << e << ',' << s << ',' << l << '\n';
          if (s + 1 == dataset.size())
            std::cout << "epoch " << e << " done (" << seconds_since(t0) << " s)" << std::endl;
        });
        for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
          std::cout << "epoch " << e << " mean loss " << result.epoch_loss[e] << "\n";
      } catch (const DivergenceError& e) {
        save_model(te_out, encoder);
        std::cerr << e.what() << "; last good parameters written to " << te_out << "\n";
        return 2;
      }
      save_model(te_out, encoder);
      std::cout << "wrote " << te_out << "\n";
    } else if (*td) {
      const auto dataset = data::dataset_read(td_data);
      SegmentationModel base = load_model(td_encoder);
      Decoder decoder(DecoderConfig{.dim = base.encoder.config().feature_dim}, td_init_seed);
      const auto t0 = std::chrono::steady_clock::now();
      DecoderTrainLog progress, log;
      try {
        log = train_decoder(decoder, base.encoder, dataset, td_cfg, [&](std::size_t epoch, const DecoderStepRecord& r) {
          progress.steps.push_back(r);
          if ((r.step + 1) % 100 == 0)
            std::cout << "epoch " << epoch << " step " << r.step + 1 << " loss " << r.loss << " ("
                      << seconds_since(t0) << " s)" << std::endl;
        });
      } catch (const DivergenceError& e) {
        save_model(td_out, base.encoder, &decoder);
        write_loss_csv(td_csv, progress);
        std::cerr << e.what() << "; last good parameters written to " << td_out << "\n";
        return 2;
      }
      save_model(td_out, base.encoder, &decoder);
      write_loss_csv(td_csv, log);
      std::cout << "wrote " << td_out << " and " << td_csv << "\n";
    } else if (*ev) {
      const auto dataset = data::dataset_read(ev_data);
      const SegmentationModel model = load_model(ev_ckpt);
      if (!model.decoder) throw FormatError("checkpoint has no decoder");
      std::vector<EvalShape> shapes;
      for (const auto& c : dataset) shapes.push_back(prepare_eval_shape(model.encoder, *model.decoder, c));
      const bool use_scale = ev_scale == "on";
      const IoUReport report = ev_mode == "full" ? evaluate_full(*model.decoder, shapes, use_scale, ev_full)
                                                 : evaluate_interactive(*model.decoder, shapes, use_scale, ev_full.theta);
      json config{{"mode", ev_mode}, {"scale", ev_scale}, {"theta", ev_full.theta}, {"alpha_conf", ev_full.alpha_conf},
                  {"k", ev_full.k}, {"data", ev_data}, {"ckpt", ev_ckpt}};
      json out = report_json(report, config);
      if (ev_sweep) {
        json rows = json::array();
        for (const auto& r : scale_perturbation_sweep(*model.decoder, shapes, default_sweep_deltas(), ev_full.theta))
          rows.push_back({{"delta", r.delta}, {"miou", r.miou}, {"delta_iou", r.delta_iou}});
        out["scale_sweep"] = rows;
      }
      std::cout << report.protocol << " mean IoU " << report.dataset_miou << " over " << report.objects.size()
                << " shapes\n";
      if (!ev_report.empty()) std::ofstream(ev_report) << out.dump(2) << "\n";
    } else if (*sv) {
      const auto colon = sv_addr.rfind(':');
      if (colon == std::string::npos) throw ValidationError("--addr must be host:port");
      service::Service::Options opts;
      if (!sv_dir.empty()) opts.shape_dir = sv_dir;
      service::Service svc(opts);
      if (!sv_model.empty()) std::cout << "loaded " << svc.load_model(sv_model) << "\n";
      httplib::Server server;
      service::mount(server, svc);
      const std::string host = sv_addr.substr(0, colon);
      const int port = std::stoi(sv_addr.substr(colon + 1));
      std::cout << "listening on " << host << ":" << port << std::endl;
      if (!server.listen(host, port)) throw std::runtime_error("cannot listen on " + sv_addr);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
