// Command-line front end over the sgsgan shared library (C API only).

#include <cstdint>
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "sgsgan.h"

namespace {

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int scale = 0;  // 0: keep config value
};

int fail(sgs_status st) {
  std::fprintf(stderr, "error: %s\n", sgs_last_error());
  return static_cast<int>(st);
}

// Builds the resolved configuration (file + command-line overrides) and
// prints its digest; every subcommand goes through here.
sgs_config* make_config(const GlobalArgs& g, sgs_status* st) {
  sgs_config* cfg = sgs_config_create();
  *st = SGS_OK;
  if (!g.config_path.empty()) {
    *st = sgs_config_load(cfg, g.config_path.c_str());
    if (*st != SGS_OK) return cfg;
  }
  if (g.seed_set) {
    *st = sgs_config_set(cfg, "train.seed", std::to_string(g.seed).c_str());
    if (*st != SGS_OK) return cfg;
  }
  if (g.scale > 0) {
    *st = sgs_config_set(cfg, "train.scale", std::to_string(g.scale).c_str());
    if (*st != SGS_OK) return cfg;
  }
  *st = sgs_config_validate(cfg);
  if (*st != SGS_OK) return cfg;
  char digest[64];
  if (sgs_config_digest(cfg, digest, sizeof(digest)) == SGS_OK) {
    std::fprintf(stderr, "config digest: %s\n", digest);
  }
  return cfg;
}

std::uint64_t effective_seed(const GlobalArgs& g, sgs_config* cfg) {
  if (g.seed_set) return g.seed;
  char buf[32];
  if (sgs_config_get(cfg, "train.seed", buf, sizeof(buf)) == SGS_OK) {
    return std::strtoull(buf, nullptr, 10);
  }
  return 1234;
}

void log_line(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segmentation-guided style-based GAN for low-dose volume "
               "translation"};
  app.require_subcommand(0, 1);
  app.fallthrough();

  GlobalArgs g;
  bool print_reference = false;
  app.add_option("--config", g.config_path, "configuration file");
  auto* seed_opt = app.add_option("--seed", g.seed, "master seed");
  app.add_option("--scale", g.scale,
                 "divide all training phase budgets by this factor");
  app.add_flag("--config-reference", print_reference,
               "print the generated configuration reference and exit");

  // phantom
  auto* phantom = app.add_subcommand("phantom", "build a synthetic dataset");
  std::string phantom_out;
  int phantom_count = -1, phantom_size = -1, phantom_drf = -1;
  bool phantom_force = false;
  phantom->add_option("--out", phantom_out, "output dataset directory")
      ->required();
  phantom->add_option("--count", phantom_count, "number of cases");
  phantom->add_option("--size", phantom_size, "volume extent per axis");
  phantom->add_option("--drf", phantom_drf, "dose reduction factor");
  phantom->add_flag("--force", phantom_force, "overwrite a non-empty directory");

  // train
  auto* train = app.add_subcommand("train", "run the alternate training schedule");
  std::string train_data, train_out;
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--out", train_out, "output directory for checkpoints/logs")
      ->required();

  // translate
  auto* translate = app.add_subcommand("translate",
                                       "translate one low-dose volume");
  std::string tr_ckpt, tr_in, tr_out;
  translate->add_option("--ckpt", tr_ckpt, "checkpoint file")->required();
  translate->add_option("--in", tr_in, "input x.pvol")->required();
  translate->add_option("--out", tr_out, "output yhat.pvol")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  std::string ev_ckpt, ev_data, ev_report, ev_text, ev_harness, ev_save_harness;
  eval->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
  eval->add_option("--data", ev_data, "dataset directory")->required();
  eval->add_option("--report", ev_report, "TSV summary output")->required();
  eval->add_option("--text", ev_text, "structured text report output");
  eval->add_option("--harness", ev_harness, "pre-trained Unet-score harness");
  eval->add_option("--save-harness", ev_save_harness,
                   "persist the trained harness checkpoint");

  // gradcheck
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference validation of all backward rules");

  // report
  auto* report = app.add_subcommand("report", "convert a metrics report");
  std::string rp_in, rp_format = "tsv", rp_out;
  report->add_option("--in", rp_in, "input text report")->required();
  report->add_option("--format", rp_format, "output format: tsv | text");
  report->add_option("--out", rp_out, "output path")->required();

  CLI11_PARSE(app, argc, argv);
  g.seed_set = seed_opt->count() > 0;

  if (print_reference) {
    const size_t n = sgs_config_reference(nullptr, 0);
    std::string buf(n + 1, '\0');
    sgs_config_reference(buf.data(), buf.size());
    std::fputs(buf.c_str(), stdout);
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::fprintf(stderr, "%s\n", app.help().c_str());
    return 2;
  }

  sgs_status st = SGS_OK;
  sgs_config* cfg = make_config(g, &st);
  if (st != SGS_OK) {
    sgs_config_destroy(cfg);
    return fail(st);
  }

  int rc = 0;
  if (phantom->parsed()) {
    if (phantom_count > 0) {
      sgs_config_set(cfg, "phantom.count", std::to_string(phantom_count).c_str());
    }
    if (phantom_size > 0) {
      st = sgs_config_set(cfg, "phantom.size", std::to_string(phantom_size).c_str());
    }
    if (st == SGS_OK && phantom_drf > 0) {
      sgs_config_set(cfg, "phantom.drf", std::to_string(phantom_drf).c_str());
    }
    if (st == SGS_OK) st = sgs_config_validate(cfg);
    if (st == SGS_OK) {
      st = sgs_phantom_build(cfg, effective_seed(g, cfg), phantom_out.c_str(),
                             phantom_force ? 1 : 0);
    }
    if (st == SGS_OK) {
      std::fprintf(stderr, "dataset written to %s\n", phantom_out.c_str());
    }
    rc = st == SGS_OK ? 0 : fail(st);
  } else if (train->parsed()) {
    st = sgs_train(cfg, train_data.c_str(), train_out.c_str(), log_line, nullptr);
    rc = st == SGS_OK ? 0 : fail(st);
  } else if (translate->parsed()) {
    sgs_volume* x = nullptr;
    sgs_volume* yhat = nullptr;
    sgs_model* model = nullptr;
    st = sgs_volume_read(tr_in.c_str(), &x);
    if (st == SGS_OK) {
      uint32_t nx = 0, ny = 0, nz = 0;
      sgs_volume_dims(x, &nx, &ny, &nz);
      st = sgs_model_load(cfg, tr_ckpt.c_str(), nx, &model);
    }
    if (st == SGS_OK) st = sgs_translate(model, x, &yhat);
    if (st == SGS_OK) st = sgs_volume_write(yhat, tr_out.c_str());
    sgs_volume_destroy(x);
    sgs_volume_destroy(yhat);
    sgs_model_destroy(model);
    rc = st == SGS_OK ? 0 : fail(st);
  } else if (eval->parsed()) {
    if (ev_text.empty()) ev_text = ev_report + ".txt";
    st = sgs_eval(cfg, ev_ckpt.c_str(), ev_data.c_str(),
                  ev_harness.empty() ? nullptr : ev_harness.c_str(),
                  ev_save_harness.empty() ? nullptr : ev_save_harness.c_str(),
                  ev_text.c_str(), ev_report.c_str());
    rc = st == SGS_OK ? 0 : fail(st);
  } else if (gradcheck->parsed()) {
    double err = 0.0;
    st = sgs_gradcheck(&err);
    std::fprintf(stderr, "gradcheck max relative error: %.3g\n", err);
    rc = st == SGS_OK ? 0 : fail(st);
  } else if (report->parsed()) {
    st = sgs_report_convert(rp_in.c_str(), rp_format.c_str(), rp_out.c_str());
    rc = st == SGS_OK ? 0 : fail(st);
  }

  sgs_config_destroy(cfg);
  return rc;
}
