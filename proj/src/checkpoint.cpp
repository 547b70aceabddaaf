#include "metra/checkpoint.h"

#include <cmath>

#include "json.hpp"
#include "metra/io.h"

namespace metra {

using nlohmann::ordered_json;

namespace {

ordered_json weights_json(const std::vector<double>& w) {
  ordered_json a = ordered_json::array();
  for (double v : w) {
    if (std::isinf(v)) {
      a.push_back("inf");
    } else {
      a.push_back(v);
    }
  }
  return a;
}

std::vector<double> weights_from(const ordered_json& a, const char* field) {
  if (!a.is_array()) throw FormatError(field, "expected an array");
  std::vector<double> w;
  for (const auto& v : a) {
    if (v.is_string() && v.get<std::string>() == "inf") {
      w.push_back(kInf);
    } else if (v.is_number()) {
      w.push_back(v.get<double>());
    } else {
      throw FormatError(field, "weights must be numbers or \"inf\"");
    }
  }
  return w;
}

ordered_json crf_json(const CrfParams& p) {
  return {{"w_del", weights_json(p.w_del)}, {"w_ins", weights_json(p.w_ins)}};
}

CrfParams crf_from(const ordered_json& j, const char* field) {
  if (!j.is_object() || !j.contains("w_del") || !j.contains("w_ins")) {
    throw FormatError(field, "expected {w_del, w_ins}");
  }
  CrfParams p;
  p.w_del = weights_from(j["w_del"], field);
  p.w_ins = weights_from(j["w_ins"], field);
  p.num_layers = static_cast<int>(p.w_del.size());
  p.validate();
  return p;
}

const ordered_json& need(const ordered_json& j, const char* field) {
  if (!j.is_object() || !j.contains(field)) throw FormatError(field, "missing");
  return j.at(field);
}

}  // namespace

std::string save_checkpoint(const Checkpoint& c) {
  const ModelConfig& mc = c.model.config();
  ordered_json doc;
  doc["format"] = "metra-checkpoint";
  doc["version"] = kCheckpointVersion;
  doc["seed"] = c.train.seed;
  doc["model"] = {{"num_layers", mc.num_layers},
                  {"channels", mc.channels},
                  {"depth", mc.depth},
                  {"effective_layers", mc.effective_layers},
                  {"input_channels", kInputChannels},
                  {"kernel", kKernelSize}};
  doc["train"] = {{"learning_rate", c.train.learning_rate},
                  {"epochs", c.train.epochs},
                  {"lambda_consistency", c.train.lambda_consistency},
                  {"adam_beta1", c.train.adam_beta1},
                  {"adam_beta2", c.train.adam_beta2},
                  {"adam_eps", c.train.adam_eps},
                  {"batch", c.train.batch}};
  doc["crf"] = crf_json(c.crf);
  doc["decode_crf"] = crf_json(c.decode_crf);
  ordered_json tensors = ordered_json::array();
  for (const TensorInfo& t : c.model.tensors()) {
    const auto v = c.model.view(t);
    tensors.push_back({{"name", t.name},
                       {"shape", t.shape},
                       {"data", std::vector<double>(v.begin(), v.end())}});
  }
  doc["tensors"] = std::move(tensors);
  doc["loss_log"] = c.loss_log;
  if (c.calibration) {
    doc["calibration"] = {{"offset", c.calibration->offset},
                          {"score", c.calibration->score},
                          {"song_id", c.calibration->song_id}};
  } else {
    doc["calibration"] = nullptr;
  }
  return doc.dump();
}

Checkpoint load_checkpoint(const std::string& text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw FormatError("", std::string("invalid checkpoint JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != "metra-checkpoint") {
    throw FormatError("format", "not a metra checkpoint");
  }
  const int version = need(doc, "version").get<int>();
  if (version != kCheckpointVersion) {
    throw UnsupportedVersionError("checkpoint version " +
                                  std::to_string(version) + " is not supported");
  }
  Checkpoint c;
  try {
    const auto& m = need(doc, "model");
    ModelConfig mc;
    mc.num_layers = need(m, "num_layers").get<int>();
    mc.channels = need(m, "channels").get<int>();
    mc.depth = need(m, "depth").get<int>();
    mc.effective_layers = need(m, "effective_layers").get<int>();
    c.model = EmissionModel(mc);

    const auto& t = need(doc, "train");
    c.train.learning_rate = need(t, "learning_rate").get<double>();
    c.train.epochs = need(t, "epochs").get<int>();
    c.train.lambda_consistency = need(t, "lambda_consistency").get<double>();
    c.train.adam_beta1 = need(t, "adam_beta1").get<double>();
    c.train.adam_beta2 = need(t, "adam_beta2").get<double>();
    c.train.adam_eps = need(t, "adam_eps").get<double>();
    c.train.batch = need(t, "batch").get<int>();
    c.train.seed = need(doc, "seed").get<std::uint64_t>();

    c.crf = crf_from(need(doc, "crf"), "crf");
    c.decode_crf = crf_from(need(doc, "decode_crf"), "decode_crf");

    const auto& tensors = need(doc, "tensors");
    if (!tensors.is_array() || tensors.size() != c.model.tensors().size()) {
      throw FormatError("tensors", "tensor count does not match the model");
    }
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      const TensorInfo& info = c.model.tensors()[k];
      if (need(tensors[k], "name").get<std::string>() != info.name) {
        throw FormatError("tensors", "expected tensor '" + info.name + "'");
      }
      const auto data = need(tensors[k], "data").get<std::vector<double>>();
      if (data.size() != info.size) {
        throw FormatError("tensors", "tensor '" + info.name + "' has wrong size");
      }
      std::copy(data.begin(), data.end(), c.model.view(info).begin());
    }
    c.loss_log = need(doc, "loss_log").get<std::vector<double>>();
    const auto& cal = need(doc, "calibration");
    if (!cal.is_null()) {
      c.calibration = Calibration{need(cal, "offset").get<int>(),
                                  need(cal, "score").get<double>(),
                                  need(cal, "song_id").get<std::string>()};
    }
  } catch (const ordered_json::exception& e) {
    throw FormatError("", std::string("malformed checkpoint: ") + e.what());
  }
  if (c.crf.num_layers != c.model.config().num_layers ||
      c.decode_crf.num_layers != c.model.config().num_layers) {
    throw FormatError("crf", "layer count does not match the model");
  }
  return c;
}

Checkpoint read_checkpoint_file(const std::string& path) {
  return load_checkpoint(read_text_file(path));
}

void write_checkpoint_file(const std::string& path, const Checkpoint& ckpt) {
  write_file_atomic(path, save_checkpoint(ckpt));
}

}  // namespace metra
