#include "levyub/levyub.h"

#include <exception>
#include <new>
#include <string>

#include <json.hpp>

#include "errors.hpp"
#include "harness.hpp"

using nlohmann::json;

struct levyub_engine {
  json config;
  std::string last_error;
  std::string result;
  std::string config_text;
};

namespace {

levyub_status classify(std::exception_ptr error, std::string& message) {
  try {
    std::rethrow_exception(error);
  } catch (const levyub::ConfigError& e) {
    message = e.what();
    return LEVYUB_ERR_CONFIG;
  } catch (const levyub::IoError& e) {
    message = e.what();
    return LEVYUB_ERR_IO;
  } catch (const levyub::DimensionError& e) {
    message = e.what();
    return LEVYUB_ERR_DIMENSION;
  } catch (const levyub::NoSolutionError& e) {
    message = e.what();
    return LEVYUB_ERR_NO_SOLUTION;
  } catch (const levyub::NumericError& e) {
    message = e.what();
    return LEVYUB_ERR_NUMERIC;
  } catch (const std::exception& e) {
    message = e.what();
    return LEVYUB_ERR_INTERNAL;
  } catch (...) {
    message = "unknown error";
    return LEVYUB_ERR_INTERNAL;
  }
}

template <typename Fn>
levyub_status guarded(levyub_engine* engine, Fn&& fn) {
  if (engine == nullptr) return LEVYUB_ERR_ARGUMENT;
  try {
    fn();
    engine->last_error.clear();
    return LEVYUB_OK;
  } catch (...) {
    return classify(std::current_exception(), engine->last_error);
  }
}

levyub_status fail(levyub_engine* engine, levyub_status status,
                   const std::string& message) {
  if (engine != nullptr) engine->last_error = message;
  return status;
}

void merge_into(json& base, const json& patch) {
  if (!patch.is_object() || !base.is_object()) {
    base = patch;
    return;
  }
  for (const auto& item : patch.items()) {
    auto it = base.find(item.key());
    if (it != base.end() && it->is_object() && item.value().is_object())
      merge_into(*it, item.value());
    else
      base[item.key()] = item.value();
  }
}

}  // namespace

extern "C" {

levyub_engine* levyub_engine_new(void) {
  try {
    auto* engine = new levyub_engine;
    engine->config = levyub::ExperimentConfig{}.to_json();
    return engine;
  } catch (...) {
    return nullptr;
  }
}

void levyub_engine_free(levyub_engine* engine) { delete engine; }

levyub_status levyub_load_config_file(levyub_engine* engine, const char* path) {
  if (engine == nullptr) return LEVYUB_ERR_ARGUMENT;
  if (path == nullptr)
    return fail(engine, LEVYUB_ERR_ARGUMENT, "path must not be null");
  return guarded(engine, [&] {
    const levyub::ExperimentConfig parsed =
        levyub::ExperimentConfig::from_file(path);
    engine->config = parsed.to_json();
  });
}

levyub_status levyub_merge_config(levyub_engine* engine, const char* json_text) {
  if (engine == nullptr) return LEVYUB_ERR_ARGUMENT;
  if (json_text == nullptr)
    return fail(engine, LEVYUB_ERR_ARGUMENT, "json_text must not be null");
  json patch;
  try {
    patch = json::parse(json_text);
  } catch (const json::exception& e) {
    return fail(engine, LEVYUB_ERR_CONFIG,
                std::string("config patch is not valid JSON: ") + e.what());
  }
  if (!patch.is_object())
    return fail(engine, LEVYUB_ERR_CONFIG, "config patch must be a JSON object");
  return guarded(engine, [&] { merge_into(engine->config, patch); });
}

levyub_status levyub_set_option(levyub_engine* engine, const char* dotted_key,
                                const char* value) {
  if (engine == nullptr) return LEVYUB_ERR_ARGUMENT;
  if (dotted_key == nullptr || value == nullptr)
    return fail(engine, LEVYUB_ERR_ARGUMENT, "key and value must not be null");
  const std::string key(dotted_key);
  if (key.empty() || key.front() == '.' || key.back() == '.' ||
      key.find("..") != std::string::npos)
    return fail(engine, LEVYUB_ERR_ARGUMENT,
                "key must be a dotted path like 'experiment.seed'");
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = std::string(value);
  }
  return guarded(engine, [&] {
    json* node = &engine->config;
    std::size_t begin = 0;
    for (;;) {
      const std::size_t dot = key.find('.', begin);
      const std::string part = key.substr(
          begin, dot == std::string::npos ? std::string::npos : dot - begin);
      if (dot == std::string::npos) {
        (*node)[part] = parsed;
        return;
      }
      json& next = (*node)[part];
      if (!next.is_object()) next = json::object();
      node = &next;
      begin = dot + 1;
    }
  });
}

const char* levyub_config_json(levyub_engine* engine) {
  if (engine == nullptr) return "";
  try {
    engine->config_text = engine->config.dump(2);
  } catch (...) {
    return "";
  }
  return engine->config_text.c_str();
}

levyub_status levyub_run(levyub_engine* engine, const char* command) {
  if (engine == nullptr) return LEVYUB_ERR_ARGUMENT;
  if (command == nullptr)
    return fail(engine, LEVYUB_ERR_ARGUMENT, "command must not be null");
  return guarded(engine, [&] {
    const levyub::ExperimentConfig config =
        levyub::ExperimentConfig::from_json(engine->config);
    const levyub::CommandResult result = levyub::run_command(config, command);
    levyub::write_artifacts(result, config.experiment.out_dir, command);
    engine->result = result.summary;
  });
}

const char* levyub_result_json(const levyub_engine* engine) {
  return engine == nullptr ? "" : engine->result.c_str();
}

const char* levyub_last_error(const levyub_engine* engine) {
  return engine == nullptr ? "engine is null" : engine->last_error.c_str();
}

const char* levyub_default_config(void) {
  static const std::string text = levyub::ExperimentConfig{}.to_json().dump(2);
  return text.c_str();
}

const char* levyub_version(void) { return "1.0.0"; }

}  // extern "C"
