#include "structrep/index.hpp"

#include <fstream>

#include "structrep/binary_io.hpp"

namespace structrep {

namespace {
constexpr char kMagic[4] = {'S', 'E', 'M', 'B'};
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& set) {
  if (Eigen::Index(set.ids.size()) != set.vectors.rows()) {
    throw ShapeError("write_embeddings: " + std::to_string(set.ids.size()) + " ids for " +
                     std::to_string(set.vectors.rows()) + " rows");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open embedding file '" + path.string() + "' for writing");
  out.write(kMagic, 4);
  binary::put_u32(out, kEmbeddingVersion);
  binary::put_u32(out, static_cast<std::uint32_t>(set.ids.size()));
  binary::put_u32(out, static_cast<std::uint32_t>(set.vectors.cols()));
  for (const auto& id : set.ids) binary::put_string(out, id);
  for (Eigen::Index i = 0; i < set.vectors.size(); ++i) {
    binary::put_f32(out, static_cast<float>(set.vectors.data()[i]));
  }
  if (!out) throw IoError("failed writing embedding file '" + path.string() + "'");
}

EmbeddingSet read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding file '" + path.string() + "'");
  const std::string what = "embedding file '" + path.string() + "'";
  char magic[4];
  binary::get_bytes(in, magic, 4, what);
  if (!std::equal(magic, magic + 4, kMagic)) throw IoError(what + ": bad format tag");
  const auto version = binary::get_u32(in, what);
  if (version != kEmbeddingVersion) throw IoError(what + ": unsupported version " + std::to_string(version));
  const auto count = binary::get_u32(in, what);
  const auto dim = binary::get_u32(in, what);
  if (dim > (1u << 20)) throw IoError(what + ": implausible dimension " + std::to_string(dim));

  EmbeddingSet set;
  set.ids.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) set.ids.push_back(binary::get_string(in, what, 4096));
  set.vectors.resize(count, dim);
  for (Eigen::Index i = 0; i < set.vectors.size(); ++i) set.vectors.data()[i] = binary::get_f32(in, what);
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(what + ": trailing bytes");
  return set;
}

}  // namespace structrep
