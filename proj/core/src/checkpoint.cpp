#include "draftuq/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "draftuq/errors.hpp"
#include "json.hpp"

namespace draftuq {

namespace {

std::string fmt_double17(double x) {
  // "%.17g" renders -0.0 as "-0", which a JSON parser reads back as the
  // integer zero, dropping the sign bit; force the float path for it.
  if (x == 0.0 && std::signbit(x)) return "-0.0";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

std::string checkpoint_to_string(const Checkpoint& ckpt) {
  const auto& m = ckpt.model;
  std::ostringstream out;
  out << "{\n";
  out << "  \"format_version\": " << kCheckpointFormatVersion << ",\n";
  out << "  \"backend\": \"" << to_string(m.backend()) << "\",\n";
  out << "  \"V\": " << m.vocab().size << ",\n";
  out << "  \"n\": " << m.context_window() << ",\n";
  out << "  \"H\": " << m.hidden_width() << ",\n";
  out << "  \"bos_id\": " << m.vocab().bos_id << ",\n";
  out << "  \"eos_id\": " << m.vocab().eos_id << ",\n";
  out << "  \"params\": [";
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    if (i > 0) out << ", ";
    out << fmt_double17(m.params()[i]);
  }
  out << "],\n";
  out << "  \"provenance\": \"" << to_string(ckpt.provenance) << "\",\n";
  out << "  \"seed_lineage\": [";
  for (std::size_t i = 0; i < ckpt.seed_lineage.size(); ++i) {
    if (i > 0) out << ", ";
    out << ckpt.seed_lineage[i];
  }
  out << "]\n";
  out << "}\n";
  return out.str();
}

Checkpoint checkpoint_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed checkpoint: ") + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw InvalidInput("unsupported checkpoint format version");
    }
    VocabSpec vocab;
    vocab.size = j.at("V").get<int>();
    vocab.bos_id = j.at("bos_id").get<int>();
    vocab.eos_id = j.at("eos_id").get<int>();
    const Backend backend = backend_from_string(j.at("backend").get<std::string>());
    const int n = j.at("n").get<int>();
    const int h = j.at("H").get<int>();
    std::vector<double> params;
    params.reserve(j.at("params").size());
    for (const auto& p : j.at("params")) params.push_back(p.get<double>());
    Checkpoint ckpt{
        AutoregressiveModel(backend, vocab, n, h, std::move(params)),
        provenance_from_string(j.at("provenance").get<std::string>()),
        {},
    };
    for (const auto& s : j.at("seed_lineage")) ckpt.seed_lineage.push_back(s.get<std::uint64_t>());
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot open checkpoint file for writing: " + path);
  const std::string text = checkpoint_to_string(ckpt);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw InvalidInput("failed writing checkpoint file: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open checkpoint file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_string(buf.str());
}

}  // namespace draftuq
