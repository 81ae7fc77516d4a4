#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "re3/model.hpp"

namespace re3 {

namespace {

constexpr const char* kMagic = "RE3CKPT";
constexpr int kVersion = 1;

void write_le_doubles(std::ostream& out, std::span<const double> values) {
  std::vector<unsigned char> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void read_le_doubles(std::istream& in, std::span<double> values) {
  std::vector<unsigned char> bytes(values.size() * 8);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw CheckpointError("truncated parameter payload");
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    values[i] = std::bit_cast<double>(bits);
  }
}

std::string read_line(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line)) throw CheckpointError(std::string("unexpected end of file reading ") + what);
  return line;
}

}  // namespace

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out << kMagic << '\n' << "version=" << kVersion << '\n';
  for (const auto& [key, value] : bundle.config.to_map()) out << key << '=' << value << '\n';
  out << "frozen_encoder=" << bundle.frozen.encoder << '\n'
      << "frozen_projector=" << bundle.frozen.projector << '\n'
      << "frozen_language=" << bundle.frozen.language << '\n'
      << '\n';
  out << "vocab " << bundle.vocab.size() << '\n';
  for (const auto& token : bundle.vocab.tokens()) out << token << '\n';
  const auto params = bundle.parameters();
  out << "params " << params.size() << '\n';
  for (const auto& p : params) {
    const auto& shape = p.tensor.shape();
    out << p.name << ' ' << shape.size();
    for (auto d : shape) out << ' ' << d;
    out << '\n';
    write_le_doubles(out, p.tensor.data());
  }
  out << "end\n";
  if (!out) throw CheckpointError("write failed for " + path.string());
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  if (read_line(in, "magic") != kMagic) throw CheckpointError(path.string() + " is not a checkpoint");

  std::map<std::string, std::string> header;
  for (std::string line = read_line(in, "header"); !line.empty(); line = read_line(in, "header")) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("malformed header line '" + line + "'");
    header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (header["version"] != std::to_string(kVersion)) {
    throw CheckpointError("unsupported checkpoint version '" + header["version"] + "'");
  }

  std::size_t vocab_size = 0;
  {
    std::istringstream ls(read_line(in, "vocab"));
    std::string tag;
    if (!(ls >> tag >> vocab_size) || tag != "vocab") throw CheckpointError("missing vocab section");
  }
  std::vector<std::string> tokens(vocab_size);
  for (auto& t : tokens) t = read_line(in, "vocab token");

  ModelConfig config;
  try {
    config = ModelConfig::from_map(header);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("bad config value: ") + e.what());
  }
  auto bundle = ModelBundle::create(config, Vocab::from_tokens(std::move(tokens)), 0);

  std::size_t count = 0;
  {
    std::istringstream ls(read_line(in, "params"));
    std::string tag;
    if (!(ls >> tag >> count) || tag != "params") throw CheckpointError("missing params section");
  }
  auto params = bundle.parameters();
  if (count != params.size()) {
    throw CheckpointError("expected " + std::to_string(params.size()) + " parameters, file has " +
                          std::to_string(count));
  }
  for (auto& p : params) {
    std::istringstream ls(read_line(in, "parameter header"));
    std::string name;
    std::size_t rank = 0;
    ls >> name >> rank;
    Shape shape(rank);
    for (auto& d : shape) ls >> d;
    if (!ls || name != p.name || shape != p.tensor.shape()) {
      throw CheckpointError("parameter mismatch at '" + p.name + "' (file has '" + name + "')");
    }
    read_le_doubles(in, p.tensor.mutable_data());
  }
  if (read_line(in, "trailer") != "end") throw CheckpointError("missing end marker");

  bundle.set_frozen({header["frozen_encoder"] == "1", header["frozen_projector"] == "1",
                     header["frozen_language"] == "1"});
  return bundle;
}

}  // namespace re3
