#include "srcd/checkpoint.hpp"

#include <fstream>
#include <sstream>

namespace srcd::io {
namespace {

constexpr const char* kMagic = "SRCDCKPT";

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "float32";
    case torch::kFloat64: return "float64";
    case torch::kInt64: return "int64";
    default: throw CheckpointError(std::string("unsupported tensor dtype: ") + c10::toString(t));
  }
}

torch::ScalarType dtype_from(const std::string& name) {
  if (name == "float32") return torch::kFloat32;
  if (name == "float64") return torch::kFloat64;
  if (name == "int64") return torch::kInt64;
  throw CheckpointError("unknown dtype in manifest: " + name);
}

std::string read_line(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line)) throw CheckpointError("truncated checkpoint header: " + path.string());
  return line;
}

}  // namespace

const torch::Tensor& Checkpoint::at(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw CheckpointError("checkpoint '" + kind + "' has no tensor named " + name);
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  nlohmann::json manifest;
  manifest["version"] = kCheckpointVersion;
  manifest["kind"] = checkpoint.kind;
  manifest["meta"] = checkpoint.meta;
  manifest["tensors"] = nlohmann::json::array();

  std::string payload;
  std::vector<torch::Tensor> contiguous;
  for (const auto& [name, value] : checkpoint.tensors) {
    auto t = value.detach().to(torch::kCPU).contiguous();
    const auto nbytes = static_cast<int64_t>(t.numel() * t.element_size());
    manifest["tensors"].push_back({{"name", name},
                                   {"dtype", dtype_name(t.scalar_type())},
                                   {"shape", t.sizes().vec()},
                                   {"offset", static_cast<int64_t>(payload.size())},
                                   {"nbytes", nbytes}});
    payload.append(static_cast<const char*>(t.data_ptr()), static_cast<size_t>(nbytes));
  }

  const std::string header = manifest.dump();
  std::ostringstream out;
  out << kMagic << '\n' << kCheckpointVersion << '\n' << header.size() << '\n' << header;
  std::string content = out.str();
  content += payload;
  write_file_atomic(path, content);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  if (read_line(in, path) != kMagic) throw CheckpointError("not a checkpoint file: " + path.string());
  const int version = std::stoi(read_line(in, path));
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " in " +
                          path.string());
  }
  const auto header_len = std::stoull(read_line(in, path));
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw CheckpointError("truncated manifest: " + path.string());

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("corrupt manifest in " + path.string() + ": " + e.what());
  }
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Checkpoint checkpoint;
  checkpoint.kind = manifest.at("kind").get<std::string>();
  checkpoint.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& entry : manifest.at("tensors")) {
    const auto offset = entry.at("offset").get<int64_t>();
    const auto nbytes = entry.at("nbytes").get<int64_t>();
    if (offset < 0 || offset + nbytes > static_cast<int64_t>(payload.size())) {
      throw CheckpointError("tensor payload out of range in " + path.string());
    }
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype_from(entry.at("dtype"))));
    if (static_cast<int64_t>(t.numel() * t.element_size()) != nbytes) {
      throw CheckpointError("size mismatch for " + entry.at("name").get<std::string>());
    }
    std::memcpy(t.data_ptr(), payload.data() + offset, static_cast<size_t>(nbytes));
    checkpoint.tensors.push_back({entry.at("name").get<std::string>(), std::move(t)});
  }
  return checkpoint;
}

std::vector<NamedTensor> module_state(const torch::nn::Module& module) {
  std::vector<NamedTensor> out;
  for (const auto& item : module.named_parameters(true)) out.push_back({item.key(), item.value()});
  for (const auto& item : module.named_buffers(true)) out.push_back({item.key(), item.value()});
  return out;
}

void load_module_state(torch::nn::Module& module, const Checkpoint& checkpoint) {
  torch::NoGradGuard no_grad;
  size_t expected = 0;
  auto copy_into = [&](const std::string& name, torch::Tensor& target) {
    ++expected;
    const auto& source = checkpoint.at(name);
    if (!source.sizes().equals(target.sizes())) {
      throw CheckpointError("shape mismatch for " + name + ": checkpoint " + shape_string(source) +
                            " vs model " + shape_string(target));
    }
    target.copy_(source.to(target.scalar_type()));
  };
  for (auto& item : module.named_parameters(true)) copy_into(item.key(), item.value());
  for (auto& item : module.named_buffers(true)) copy_into(item.key(), item.value());
  if (expected != checkpoint.tensors.size()) {
    throw CheckpointError("checkpoint '" + checkpoint.kind + "' holds " +
                          std::to_string(checkpoint.tensors.size()) + " tensors, model expects " +
                          std::to_string(expected));
  }
}

}  // namespace srcd::io
