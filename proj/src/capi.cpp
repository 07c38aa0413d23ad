#include "sgsgan.h"

#include <cstring>
#include <filesystem>
#include <memory>
#include <string>

#include "sgs/config.hpp"
#include "sgs/data.hpp"
#include "sgs/eval.hpp"
#include "sgs/gradcheck.hpp"
#include "sgs/io.hpp"
#include "sgs/phantom.hpp"
#include "sgs/train.hpp"

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

template <class Fn>
sgs_status guarded(Fn&& fn) {
  try {
    fn();
    return SGS_OK;
  } catch (const sgs::Error& e) {
    set_error(e.what());
    return static_cast<sgs_status>(e.code());
  } catch (const std::exception& e) {
    set_error(e.what());
    return SGS_ERROR;
  }
}

sgs_status copy_out(const std::string& s, char* buf, size_t buf_size) {
  if (buf == nullptr || buf_size < s.size() + 1) {
    set_error("buffer too small (" + std::to_string(s.size() + 1) +
              " bytes needed)");
    return SGS_ERROR;
  }
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return SGS_OK;
}

}  // namespace

struct sgs_config {
  sgs::Config impl;
};

struct sgs_volume {
  sgs::Volume impl;
};

struct sgs_model {
  std::unique_ptr<sgs::Generator<float>> gen;
};

extern "C" {

const char* sgs_version(void) { return "sgsgan 1.0.0"; }

const char* sgs_last_error(void) { return g_last_error.c_str(); }

sgs_config* sgs_config_create(void) { return new sgs_config{}; }

void sgs_config_destroy(sgs_config* cfg) { delete cfg; }

sgs_status sgs_config_load(sgs_config* cfg, const char* path) {
  if (cfg == nullptr || path == nullptr) {
    set_error("null argument");
    return SGS_CONFIG_ERROR;
  }
  return guarded([&] { cfg->impl.load_file(path); });
}

sgs_status sgs_config_set(sgs_config* cfg, const char* key, const char* value) {
  if (cfg == nullptr || key == nullptr || value == nullptr) {
    set_error("null argument");
    return SGS_CONFIG_ERROR;
  }
  return guarded([&] { cfg->impl.set(key, value); });
}

sgs_status sgs_config_get(const sgs_config* cfg, const char* key, char* buf,
                          size_t buf_size) {
  if (cfg == nullptr || key == nullptr) {
    set_error("null argument");
    return SGS_CONFIG_ERROR;
  }
  std::string value;
  const sgs_status st = guarded([&] { value = cfg->impl.get_raw(key); });
  if (st != SGS_OK) return st;
  return copy_out(value, buf, buf_size);
}

sgs_status sgs_config_digest(const sgs_config* cfg, char* buf, size_t buf_size) {
  if (cfg == nullptr) {
    set_error("null argument");
    return SGS_CONFIG_ERROR;
  }
  return copy_out(cfg->impl.digest(), buf, buf_size);
}

sgs_status sgs_config_validate(const sgs_config* cfg) {
  if (cfg == nullptr) {
    set_error("null argument");
    return SGS_CONFIG_ERROR;
  }
  return guarded([&] { cfg->impl.validate(); });
}

size_t sgs_config_reference(char* buf, size_t buf_size) {
  const std::string ref = sgs::Config::reference();
  if (buf != nullptr && buf_size > 0) {
    const size_t n = std::min(buf_size - 1, ref.size());
    std::memcpy(buf, ref.data(), n);
    buf[n] = '\0';
  }
  return ref.size();
}

sgs_status sgs_volume_create(uint32_t nx, uint32_t ny, uint32_t nz,
                             const float* data, sgs_volume** out) {
  if (out == nullptr || data == nullptr || nx == 0 || ny == 0 || nz == 0) {
    set_error("null argument or empty dims");
    return SGS_CONFIG_ERROR;
  }
  return guarded([&] {
    auto v = std::make_unique<sgs_volume>();
    v->impl = sgs::Volume(nx, ny, nz);
    std::memcpy(v->impl.data.data(), data,
                sizeof(float) * v->impl.data.size());
    *out = v.release();
  });
}

sgs_status sgs_volume_read(const char* path, sgs_volume** out) {
  if (path == nullptr || out == nullptr) {
    set_error("null argument");
    return SGS_CONFIG_ERROR;
  }
  return guarded([&] {
    auto v = std::make_unique<sgs_volume>();
    v->impl = sgs::read_volume(path);
    *out = v.release();
  });
}

sgs_status sgs_volume_write(const sgs_volume* vol, const char* path) {
  if (vol == nullptr || path == nullptr) {
    set_error("null argument");
    return SGS_CONFIG_ERROR;
  }
  return guarded([&] { sgs::write_volume(path, vol->impl); });
}

void sgs_volume_dims(const sgs_volume* vol, uint32_t* nx, uint32_t* ny,
                     uint32_t* nz) {
  if (vol == nullptr) return;
  if (nx != nullptr) *nx = static_cast<uint32_t>(vol->impl.nx);
  if (ny != nullptr) *ny = static_cast<uint32_t>(vol->impl.ny);
  if (nz != nullptr) *nz = static_cast<uint32_t>(vol->impl.nz);
}

const float* sgs_volume_data(const sgs_volume* vol) {
  return vol == nullptr ? nullptr : vol->impl.data.data();
}

void sgs_volume_destroy(sgs_volume* vol) { delete vol; }

sgs_status sgs_phantom_build(const sgs_config* cfg, uint64_t seed,
                             const char* out_dir, int force) {
  if (cfg == nullptr || out_dir == nullptr) {
    set_error("null argument");
    return SGS_CONFIG_ERROR;
  }
  return guarded([&] {
    cfg->impl.validate();
    namespace fs = std::filesystem;
    if (fs::exists(out_dir) && !fs::is_empty(out_dir) && force == 0) {
      throw sgs::DataError("output directory '" + std::string(out_dir) +
                           "' is not empty (use force)");
    }
    sgs::DatasetBuildParams params;
    params.size = cfg->impl.get_int("phantom.size");
    params.count = cfg->impl.get_int("phantom.count");
    params.dose.drf = cfg->impl.get_int("phantom.drf");
    params.dose.rescale = cfg->impl.get_bool("phantom.rescale");
    params.train_fraction = cfg->impl.get_double("phantom.train_fraction");
    params.background = cfg->impl.get_double("phantom.background");
    params.render_scale = cfg->impl.get_int("phantom.render_scale");
    params.samples_per_case = cfg->impl.get_int("phantom.samples_per_case");
    sgs::build_dataset(params, seed, out_dir);
  });
}

sgs_status sgs_train(const sgs_config* cfg, const char* data_dir,
                     const char* out_dir, sgs_log_fn log_fn, void* log_user) {
  if (cfg == nullptr || data_dir == nullptr || out_dir == nullptr) {
    set_error("null argument");
    return SGS_CONFIG_ERROR;
  }
  return guarded([&] {
    const sgs::Dataset data = sgs::load_dataset(data_dir);
    sgs::Trainer trainer(cfg->impl, data);
    sgs::TrainObserver obs;
    if (log_fn != nullptr) {
      obs.on_log = [log_fn, log_user](const std::string& line) {
        log_fn(line.c_str(), log_user);
      };
    }
    trainer.run(out_dir, log_fn != nullptr ? &obs : nullptr);
  });
}

sgs_status sgs_model_load(const sgs_config* cfg, const char* ckpt_path,
                          uint32_t volume_size, sgs_model** out) {
  if (cfg == nullptr || ckpt_path == nullptr || out == nullptr) {
    set_error("null argument");
    return SGS_CONFIG_ERROR;
  }
  return guarded([&] {
    auto m = std::make_unique<sgs_model>();
    m->gen = sgs::load_generator(cfg->impl, ckpt_path, volume_size,
                                 cfg->impl.get_int("model.rois"));
    *out = m.release();
  });
}

void sgs_model_destroy(sgs_model* model) { delete model; }

sgs_status sgs_translate(const sgs_model* model, const sgs_volume* x,
                         sgs_volume** yhat) {
  if (model == nullptr || x == nullptr || yhat == nullptr) {
    set_error("null argument");
    return SGS_CONFIG_ERROR;
  }
  return guarded([&] {
    auto v = std::make_unique<sgs_volume>();
    v->impl = sgs::translate_volume(*model->gen, x->impl);
    *yhat = v.release();
  });
}

sgs_status sgs_eval(const sgs_config* cfg, const char* ckpt_path,
                    const char* data_dir, const char* harness_path,
                    const char* save_harness, const char* report_text,
                    const char* report_tsv) {
  if (cfg == nullptr || ckpt_path == nullptr || data_dir == nullptr) {
    set_error("null argument");
    return SGS_CONFIG_ERROR;
  }
  return guarded([&] {
    const sgs::Dataset data = sgs::load_dataset(data_dir);
    sgs::EvalOptions opts;
    if (harness_path != nullptr) opts.harness_path = harness_path;
    if (save_harness != nullptr) opts.save_harness_path = save_harness;
    const sgs::MetricReport report =
        sgs::evaluate_checkpoint(cfg->impl, ckpt_path, data, opts);
    if (report_text != nullptr) sgs::write_report_text(report_text, report);
    if (report_tsv != nullptr) sgs::write_report_tsv(report_tsv, report);
  });
}

sgs_status sgs_gradcheck(double* max_rel_err) {
  return guarded([&] {
    const sgs::GradCheckReport report = sgs::run_gradcheck_suite();
    if (max_rel_err != nullptr) *max_rel_err = report.worst();
    if (report.worst() >= 1e-4) {
      std::string worst_name;
      for (const auto& e : report.entries) {
        if (e.max_rel_err == report.worst()) worst_name = e.name;
      }
      throw sgs::NumericError("gradient check failed: " + worst_name +
                              " has max relative error " +
                              std::to_string(report.worst()));
    }
  });
}

sgs_status sgs_report_convert(const char* in_path, const char* format,
                              const char* out_path) {
  if (in_path == nullptr || format == nullptr || out_path == nullptr) {
    set_error("null argument");
    return SGS_CONFIG_ERROR;
  }
  return guarded([&] {
    const sgs::MetricReport report = sgs::read_report_text(in_path);
    const std::string fmt(format);
    if (fmt == "tsv") {
      sgs::write_report_tsv(out_path, report);
    } else if (fmt == "text") {
      sgs::write_report_text(out_path, report);
    } else {
      throw sgs::ConfigError("unknown report format '" + fmt +
                             "' (expected text or tsv)");
    }
  });
}

}  // extern "C"
