#pragma once

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rulerec/graph.hpp"
#include "rulerec/model.hpp"
#include "rulerec/train.hpp"

namespace rulerec {

using ordered_json = nlohmann::ordered_json;

// Shortest-round-trip decimal for CSV output.
inline std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string read_file_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed on '" + path + "'");
  return ss.str();
}

// Writes through a temp file and renames, so readers never see partial output.
inline void atomic_write_text(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("write failed on '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename '" + tmp + "' -> '" + path + "': " + ec.message());
}

inline std::string digest_hex(const std::string& bytes) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return buf;
}

inline std::string digest_file(const std::string& path) {
  return digest_hex(read_file_text(path));
}

// ---- vocabulary file: one name per line under two section headers ----

inline std::string vocab_to_text(const Vocab& v) {
  std::string out = "[entity_types]\n";
  for (const std::string& n : v.entity_types) out += n + "\n";
  out += "[rule_types]\n";
  for (const std::string& n : v.rule_types) out += n + "\n";
  return out;
}

inline void save_vocab(const std::string& path, const Vocab& v) {
  atomic_write_text(path, vocab_to_text(v));
}

inline Vocab parse_vocab(const std::string& text, const std::string& origin) {
  std::vector<std::string> entities, rules;
  std::vector<std::string>* section = nullptr;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line == "[entity_types]") {
      section = &entities;
    } else if (line == "[rule_types]") {
      section = &rules;
    } else if (line.front() == '[') {
      throw DataError(origin + ":" + std::to_string(lineno) + ": unknown section '" +
                      line + "'");
    } else {
      if (!section)
        throw DataError(origin + ":" + std::to_string(lineno) +
                        ": name before any section header");
      section->push_back(line);
    }
  }
  return Vocab::make(std::move(entities), std::move(rules));
}

inline Vocab load_vocab(const std::string& path) {
  return parse_vocab(read_file_text(path), path);
}

// ---- dataset file: one user per line as a JSON object ----

inline ordered_json user_to_json(const UserData& u, const Vocab& vocab) {
  ordered_json j;
  j["user_id"] = u.graph.user_id;
  ordered_json entities = ordered_json::array();
  for (int i = 0; i < u.graph.num_nodes(); ++i) {
    ordered_json e;
    e["id"] = u.graph.node_ids[i];
    e["type"] = vocab.entity_types[u.graph.node_types[i]];
    entities.push_back(std::move(e));
  }
  j["entities"] = std::move(entities);
  ordered_json rules = ordered_json::array();
  for (const Edge& e : u.graph.edges) {
    ordered_json r;
    r["src"] = u.graph.node_ids[e.src];
    r["rule"] = vocab.rule_types[e.rule];
    r["dst"] = u.graph.node_ids[e.dst];
    rules.push_back(std::move(r));
  }
  j["rules"] = std::move(rules);
  return j;
}

inline std::string dataset_to_text(const Dataset& ds) {
  std::string out;
  for (const UserData& u : ds.users) {
    out += user_to_json(u, ds.vocab).dump();
    out += "\n";
  }
  return out;
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
  atomic_write_text(path, dataset_to_text(ds));
}

inline Dataset parse_dataset(const std::string& text, const Vocab& vocab,
                             const std::string& origin) {
  Dataset ds;
  ds.vocab = vocab;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string where = origin + ":" + std::to_string(lineno);
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    try {
      if (!j.is_object()) throw DataError("user record must be an object");
      std::string user_id = j.at("user_id").get<std::string>();
      std::vector<EntitySpec> entities;
      for (const auto& e : j.at("entities")) {
        EntitySpec spec;
        spec.id = e.at("id").get<std::string>();
        spec.type = e.at("type").get<std::string>();
        entities.push_back(std::move(spec));
      }
      std::vector<RuleSpec> rules;
      for (const auto& r : j.at("rules")) {
        RuleSpec spec;
        spec.src = r.at("src").get<std::string>();
        spec.rule = r.at("rule").get<std::string>();
        spec.dst = r.at("dst").get<std::string>();
        rules.push_back(std::move(spec));
      }
      UserData u;
      u.graph = build_graph(user_id, entities, rules, vocab);
      ds.users.push_back(std::move(u));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return ds;
}

inline Dataset load_dataset(const std::string& path, const Vocab& vocab) {
  return parse_dataset(read_file_text(path), vocab, path);
}

// ---- model file: versioned JSON, load(save(p)) reproduces p bit-exactly ----

inline constexpr const char* kModelFormat = "rulerec-model";
inline constexpr int kModelVersion = 1;

inline std::string model_to_text(const ModelParams& p) {
  ordered_json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["entity_types"] = p.num_entity_types;
  j["hidden"] = p.hidden;
  j["rule_types"] = p.num_rule_types;
  auto ts = tensors(p);
  ordered_json tj;
  for (int i = 0; i < 8; ++i) {
    ordered_json t;
    t["rows"] = ts[i]->rows;
    t["cols"] = ts[i]->cols;
    t["data"] = ts[i]->data;
    tj[kTensorNames[i]] = std::move(t);
  }
  j["tensors"] = std::move(tj);
  return j.dump(2) + "\n";
}

inline void save_model(const std::string& path, const ModelParams& p) {
  for (const Matrix* t : tensors(p))
    if (!all_finite(*t))
      throw DataError("save_model: refusing to write non-finite parameters");
  atomic_write_text(path, model_to_text(p));
}

inline ModelParams parse_model(const std::string& text, const std::string& origin) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(origin + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kModelFormat)
      throw DataError(origin + ": not a model file");
    int version = j.at("version").get<int>();
    if (version != kModelVersion)
      throw DataError(origin + ": unsupported model version " +
                      std::to_string(version));
    ModelParams p;
    p.num_entity_types = j.at("entity_types").get<int>();
    p.hidden = j.at("hidden").get<int>();
    p.num_rule_types = j.at("rule_types").get<int>();
    if (p.num_entity_types <= 0 || p.hidden <= 0 || p.num_rule_types <= 0)
      throw DataError(origin + ": dimensions must be positive");
    const auto& tj = j.at("tensors");
    auto ts = tensors(p);
    for (int i = 0; i < 8; ++i) {
      const auto& t = tj.at(kTensorNames[i]);
      Matrix m(t.at("rows").get<int>(), t.at("cols").get<int>());
      const auto& data = t.at("data");
      if (data.size() != m.data.size())
        throw DataError(origin + ": tensor " + kTensorNames[i] + " has " +
                        std::to_string(data.size()) + " values, expected " +
                        std::to_string(m.data.size()));
      for (size_t k = 0; k < m.data.size(); ++k) m.data[k] = data[k].get<double>();
      if (!all_finite(m))
        throw DataError(origin + ": tensor " + kTensorNames[i] +
                        " holds non-finite values");
      *ts[i] = std::move(m);
    }
    int t2 = 2 * p.num_entity_types, h = p.hidden, r = p.num_rule_types;
    auto expect = [&](int slot, int rows, int cols) {
      if (ts[slot]->rows != rows || ts[slot]->cols != cols)
        throw DataError(origin + ": tensor " + kTensorNames[slot] + " is " +
                        ts[slot]->shape_str() + ", expected " +
                        std::to_string(rows) + "x" + std::to_string(cols));
    };
    expect(0, t2, h);
    expect(1, 1, h);
    expect(2, 2 * h, h);
    expect(3, 1, h);
    expect(4, 2 * h, r);
    expect(5, 1, r);
    expect(6, r, r);
    expect(7, 1, r);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(origin + ": " + e.what());
  }
}

inline ModelParams load_model(const std::string& path) {
  return parse_model(read_file_text(path), path);
}

// ---- metrics CSV: one row per round, %.17g so reloads are lossless ----

inline std::string metrics_header() {
  return "round,train_loss,test_loss,test_auc,test_mean_rank,test_mean_rank_rt,"
         "elapsed_ms\n";
}

inline std::string metrics_row(const RoundLog& r) {
  return std::to_string(r.round) + "," + fmt_g17(r.train_loss) + "," +
         fmt_g17(r.test_loss) + "," + fmt_g17(r.test_auc) + "," +
         fmt_g17(r.test_mean_rank) + "," + fmt_g17(r.test_mean_rank_rt) + "," +
         fmt_g17(r.elapsed_ms) + "\n";
}

inline std::string metrics_to_text(const std::vector<RoundLog>& log) {
  std::string out = metrics_header();
  for (const RoundLog& r : log) out += metrics_row(r);
  return out;
}

inline void save_metrics(const std::string& path, const std::vector<RoundLog>& log) {
  atomic_write_text(path, metrics_to_text(log));
}

inline void save_hit_curve(const std::string& path, const std::vector<double>& curve) {
  std::string out = "n,hit_rate\n";
  for (size_t i = 0; i < curve.size(); ++i)
    out += std::to_string(i + 1) + "," + fmt_g17(curve[i]) + "\n";
  atomic_write_text(path, out);
}

// ---- run manifest: inputs, outputs, digests, effective configuration ----

struct FileStamp {
  std::string role;
  std::string path;
  std::string digest;
};

struct RunManifest {
  std::string command;
  std::string version_string;
  std::string started;
  std::string finished;
  uint64_t seed = 0;
  ordered_json config;
  std::vector<FileStamp> inputs;
  std::vector<FileStamp> outputs;
};

inline std::string now_iso8601_utc() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void save_manifest(const std::string& path, const RunManifest& m) {
  ordered_json j;
  j["format"] = "rulerec-manifest";
  j["version"] = 1;
  j["command"] = m.command;
  j["version_string"] = m.version_string;
  j["started"] = m.started;
  j["finished"] = m.finished;
  j["seed"] = m.seed;
  j["config"] = m.config;
  auto stamp_list = [](const std::vector<FileStamp>& stamps) {
    ordered_json arr = ordered_json::array();
    for (const FileStamp& s : stamps) {
      ordered_json f;
      f["role"] = s.role;
      f["path"] = s.path;
      f["digest"] = s.digest;
      arr.push_back(std::move(f));
    }
    return arr;
  };
  j["inputs"] = stamp_list(m.inputs);
  j["outputs"] = stamp_list(m.outputs);
  atomic_write_text(path, j.dump(2) + "\n");
}

}  // namespace rulerec
