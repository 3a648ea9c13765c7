#include "fuselab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "fuselab/error.hpp"

namespace fuselab {

namespace {

using nlohmann::json;

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_u64(const std::string& bytes, std::size_t offset) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return v;
}

json head_json(const HeadConfig& head) {
  return {{"loss", to_string(head.loss)}, {"lmcl", {{"s", head.lmcl_s}, {"m", head.lmcl_m}}}};
}

HeadConfig head_from_json(const json& j) {
  HeadConfig head;
  head.loss = loss_kind_from_string(j.at("loss").get<std::string>());
  head.lmcl_s = j.at("lmcl").at("s").get<double>();
  head.lmcl_m = j.at("lmcl").at("m").get<double>();
  return head;
}

std::string serialize(json header, const std::vector<std::pair<std::string, Tensor>>& tensors) {
  header["format"] = "fuselab-checkpoint";
  header["version"] = 1;
  json entries = json::array();
  for (const auto& [name, t] : tensors) entries.push_back({{"name", name}, {"shape", t.shape()}});
  header["tensors"] = entries;
  const std::string text = header.dump();
  std::string out;
  append_u64(out, text.size());
  out += text;
  for (const auto& [name, t] : tensors) {
    for (double v : t.data()) append_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

void fill_tensors(const json& header, const std::string& bytes, std::size_t offset,
                  const std::vector<std::pair<std::string, Tensor>>& targets) {
  const json& entries = header.at("tensors");
  if (entries.size() != targets.size()) {
    throw ParseError("checkpoint lists " + std::to_string(entries.size()) + " tensors, expected " +
                     std::to_string(targets.size()));
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    auto [name, tensor] = targets[i];
    const Shape shape = entries[i].at("shape").get<Shape>();
    if (entries[i].at("name").get<std::string>() != name || shape != tensor.shape()) {
      throw ParseError("checkpoint tensor " + std::to_string(i) + " is " + entries[i].dump() + ", expected " +
                       name + " " + shape_to_string(tensor.shape()));
    }
    if (offset + 8 * tensor.numel() > bytes.size()) throw ParseError("checkpoint truncated in " + name);
    auto values = tensor.mutable_data();
    for (double& v : values) {
      v = std::bit_cast<double>(read_u64(bytes, offset));
      offset += 8;
    }
  }
  if (offset != bytes.size()) throw ParseError("checkpoint has trailing bytes");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string serialize_checkpoint(const CnnParams& params) {
  json header = head_json(params.head_config);
  header["architecture"] = "cnn";
  header["variant"] = params.arch.variant;
  header["input_size"] = params.arch.input_size;
  header["channels"] = params.arch.channels;
  header["seed"] = params.seed;
  return serialize(std::move(header), params.named_tensors());
}

std::string serialize_checkpoint(const FusionParams& params) {
  json header = head_json(params.head_config);
  header["architecture"] = "fusion";
  header["normalize_inputs"] = params.normalize_inputs;
  header["seed"] = params.seed;
  return serialize(std::move(header), params.named_tensors());
}

AnyParams deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8) throw ParseError("checkpoint shorter than its length prefix");
  const std::uint64_t length = read_u64(bytes, 0);
  if (length > bytes.size() - 8) throw ParseError("checkpoint header length exceeds file size");
  json header;
  try {
    header = json::parse(bytes.substr(8, length));
    if (header.at("format") != "fuselab-checkpoint") throw ParseError("not a fuselab checkpoint");
    const HeadConfig head = head_from_json(header);
    const auto seed = header.at("seed").get<std::uint64_t>();
    if (header.at("architecture") == "cnn") {
      CnnArch arch = CnnArch::named(header.at("variant").get<std::string>(), header.at("input_size").get<std::size_t>());
      arch.channels = header.at("channels").get<std::vector<std::size_t>>();
      CnnParams params = init_cnn_params(seed, arch, head);
      fill_tensors(header, bytes, 8 + length, params.named_tensors());
      return params;
    }
    if (header.at("architecture") == "fusion") {
      FusionParams params = init_fusion_params(seed, head, header.at("normalize_inputs").get<bool>());
      fill_tensors(header, bytes, 8 + length, params.named_tensors());
      return params;
    }
    throw ParseError("unknown checkpoint architecture " + header.at("architecture").dump());
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed checkpoint header: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const CnnParams& params) {
  write_file(path, serialize_checkpoint(params));
}

void save_checkpoint(const std::filesystem::path& path, const FusionParams& params) {
  write_file(path, serialize_checkpoint(params));
}

AnyParams load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

CnnParams load_cnn_checkpoint(const std::filesystem::path& path) {
  AnyParams any = load_checkpoint(path);
  if (auto* p = std::get_if<CnnParams>(&any)) return std::move(*p);
  throw ParseError(path.string() + " is not a CNN checkpoint");
}

FusionParams load_fusion_checkpoint(const std::filesystem::path& path) {
  AnyParams any = load_checkpoint(path);
  if (auto* p = std::get_if<FusionParams>(&any)) return std::move(*p);
  throw ParseError(path.string() + " is not a fusion checkpoint");
}

std::uint64_t params_hash(const CnnParams& params) { return fnv1a(serialize_checkpoint(params)); }
std::uint64_t params_hash(const FusionParams& params) { return fnv1a(serialize_checkpoint(params)); }

}  // namespace fuselab
