#include "pepco/pepco.h"

#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "pepco/commands.hpp"
#include "pepco/error.hpp"

struct pepco_config {
  pepco::config::RunConfig cfg;
};

struct pepco_model {
  pepco::model::CoModel model;
};

namespace {

thread_local std::string last_error;

pepco_status fail(pepco_status status, const char* message) {
  last_error = message;
  return status;
}

// Runs `body`, translating exceptions into status codes.
template <typename F>
pepco_status guarded(F&& body) {
  try {
    body();
    return PEPCO_OK;
  } catch (const pepco::ParseError& e) {
    return fail(PEPCO_ERR_PARSE, e.what());
  } catch (const pepco::ConfigError& e) {
    return fail(PEPCO_ERR_CONFIG, e.what());
  } catch (const pepco::IoError& e) {
    return fail(PEPCO_ERR_IO, e.what());
  } catch (const pepco::ShapeError& e) {
    return fail(PEPCO_ERR_SHAPE, e.what());
  } catch (const pepco::NumericError& e) {
    return fail(PEPCO_ERR_NUMERIC, e.what());
  } catch (const pepco::ContractError& e) {
    return fail(PEPCO_ERR_CONTRACT, e.what());
  } catch (const std::exception& e) {
    return fail(PEPCO_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(PEPCO_ERR_INTERNAL, "unknown failure");
  }
}

#define PEPCO_REQUIRE(ptr) \
  if (!(ptr)) return fail(PEPCO_ERR_ARGUMENT, #ptr " is null")

double opt(const std::optional<double>& v) { return v ? *v : std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

extern "C" {

const char* pepco_version(void) { return "1.0.0"; }

const char* pepco_last_error(void) { return last_error.c_str(); }

const char* pepco_status_name(pepco_status status) {
  switch (status) {
    case PEPCO_OK: return "ok";
    case PEPCO_ERR_ARGUMENT: return "argument";
    case PEPCO_ERR_PARSE: return "parse";
    case PEPCO_ERR_CONFIG: return "config";
    case PEPCO_ERR_IO: return "io";
    case PEPCO_ERR_SHAPE: return "shape";
    case PEPCO_ERR_NUMERIC: return "numeric";
    case PEPCO_ERR_CONTRACT: return "contract";
    case PEPCO_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

pepco_status pepco_config_new(pepco_config** out) {
  PEPCO_REQUIRE(out);
  *out = nullptr;
  return guarded([&] { *out = new pepco_config{}; });
}

pepco_status pepco_config_load(const char* path, pepco_config** out) {
  PEPCO_REQUIRE(path);
  PEPCO_REQUIRE(out);
  *out = nullptr;
  return guarded([&] { *out = new pepco_config{pepco::config::RunConfig::from_file(path)}; });
}

pepco_status pepco_config_set(pepco_config* cfg, const char* key, const char* value) {
  PEPCO_REQUIRE(cfg);
  PEPCO_REQUIRE(key);
  PEPCO_REQUIRE(value);
  return guarded([&] { cfg->cfg.set(key, value); });
}

pepco_status pepco_config_override(pepco_config* cfg, const char* assignment) {
  PEPCO_REQUIRE(cfg);
  PEPCO_REQUIRE(assignment);
  return guarded([&] { cfg->cfg.apply_override(assignment); });
}

pepco_status pepco_config_get(const pepco_config* cfg, const char* key, char* buf, size_t capacity, size_t* needed) {
  PEPCO_REQUIRE(cfg);
  PEPCO_REQUIRE(key);
  return guarded([&] {
    const std::string& v = cfg->cfg.get(key);
    if (needed) *needed = v.size() + 1;
    if (capacity == 0) return;
    if (!buf) throw pepco::ContractError("buf is null with nonzero capacity");
    const size_t n = std::min(capacity - 1, v.size());
    std::memcpy(buf, v.data(), n);
    buf[n] = '\0';
  });
}

void pepco_config_free(pepco_config* cfg) { delete cfg; }

pepco_status pepco_train(const pepco_config* cfg, pepco_train_summary* out) {
  PEPCO_REQUIRE(cfg);
  return guarded([&] {
    const auto s = pepco::commands::run_train(cfg->cfg);
    if (out) {
      *out = {s.best_epoch, s.best_val_metric, opt(s.test.mae), opt(s.test.mse), opt(s.test.accuracy)};
    }
  });
}

pepco_status pepco_infer(const pepco_config* cfg, const char* checkpoint, const char* input, int assert_seq_only,
                         pepco_infer_summary* out) {
  PEPCO_REQUIRE(cfg);
  PEPCO_REQUIRE(checkpoint);
  PEPCO_REQUIRE(input);
  return guarded([&] {
    const auto s = pepco::commands::run_infer(cfg->cfg, checkpoint, input, assert_seq_only != 0);
    if (out) *out = {s.predictions, s.graph_builds, s.graph_encodes};
  });
}

pepco_status pepco_attribute(const pepco_config* cfg, const char* checkpoint, const char* input, pepco_route route,
                             size_t steps, pepco_attribute_summary* out) {
  PEPCO_REQUIRE(cfg);
  PEPCO_REQUIRE(checkpoint);
  PEPCO_REQUIRE(input);
  if (route != PEPCO_ROUTE_SEQ && route != PEPCO_ROUTE_GRAPH) return fail(PEPCO_ERR_ARGUMENT, "unknown route");
  return guarded([&] {
    const auto r = route == PEPCO_ROUTE_SEQ ? pepco::attr::Route::Seq : pepco::attr::Route::Graph;
    const auto s = pepco::commands::run_attribute(cfg->cfg, checkpoint, input, r, steps);
    if (out) *out = {s.profiles, s.few_steps ? 1 : 0};
  });
}

pepco_status pepco_compare(const pepco_config* cfg, const char* profiles_a, const char* profiles_b) {
  PEPCO_REQUIRE(cfg);
  PEPCO_REQUIRE(profiles_a);
  PEPCO_REQUIRE(profiles_b);
  return guarded([&] { pepco::commands::run_compare(cfg->cfg, profiles_a, profiles_b); });
}

pepco_status pepco_sweep_lambda(const pepco_config* cfg, const double* grid, size_t count) {
  PEPCO_REQUIRE(cfg);
  if (count > 0) PEPCO_REQUIRE(grid);
  return guarded([&] {
    pepco::commands::run_sweep_lambda(cfg->cfg, count ? std::vector<double>(grid, grid + count) : std::vector<double>{});
  });
}

pepco_status pepco_gen_synth(size_t count, size_t max_length, uint64_t seed, const char* output) {
  PEPCO_REQUIRE(output);
  return guarded([&] { pepco::commands::run_gen_synth(count, max_length, seed, output); });
}

pepco_status pepco_model_load(const char* checkpoint, pepco_model** out) {
  PEPCO_REQUIRE(checkpoint);
  PEPCO_REQUIRE(out);
  *out = nullptr;
  return guarded([&] { *out = new pepco_model{pepco::model::load_model(checkpoint)}; });
}

void pepco_model_free(pepco_model* model) { delete model; }

size_t pepco_model_output_width(const pepco_model* model) {
  return model ? model->model.config().output_width() : 0;
}

pepco_status pepco_model_predict(const pepco_model* model, const char* sequence, double* outputs, size_t capacity) {
  PEPCO_REQUIRE(model);
  PEPCO_REQUIRE(sequence);
  PEPCO_REQUIRE(outputs);
  return guarded([&] {
    const auto& m = model->model;
    if (capacity < m.config().output_width()) throw pepco::ContractError("output buffer too small");
    if (pepco::train::inference_needs_graph(m)) {
      throw pepco::ContractError("model needs the molecular graph; sequence-only prediction is unavailable");
    }
    pepco::data::PeptideRecord rec{"", sequence, 0.0};
    pepco::data::validate_record(rec, m.config().max_length);
    const auto p = pepco::train::infer(m, pepco::data::encode_sequence(rec));
    std::copy(p.outputs.begin(), p.outputs.end(), outputs);
  });
}

uint64_t pepco_graph_build_count(void) { return pepco::data::graph_build_count(); }

uint64_t pepco_graph_encode_count(void) { return pepco::model::graph_encode_count(); }

}  // extern "C"
