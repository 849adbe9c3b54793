#include <fstream>
#include <iterator>

#include "isoflow/data.hpp"

namespace isoflow::data {

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t big_endian(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_big_endian(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

void check_magic(std::uint32_t found, std::uint32_t expected, const std::filesystem::path& path) {
  if (found != expected) {
    char msg[96];
    std::snprintf(msg, sizeof msg, "magic 0x%08x, expected 0x%08x", found, expected);
    fail(ErrorCode::bad_magic, "'" + path.string() + "': " + msg);
  }
}

}  // namespace

IdxImages read_idx_images(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  require(bytes.size() >= 4, ErrorCode::truncated, "'" + path.string() + "': missing header");
  check_magic(big_endian(bytes, 0), idx_images_magic, path);
  require(bytes.size() >= 16, ErrorCode::truncated, "'" + path.string() + "': short header");
  IdxImages img;
  img.count = big_endian(bytes, 4);
  img.rows = big_endian(bytes, 8);
  img.cols = big_endian(bytes, 12);
  const std::size_t payload = std::size_t{img.count} * img.rows * img.cols;
  require(bytes.size() >= 16 + payload, ErrorCode::truncated,
          "'" + path.string() + "': header declares " + std::to_string(payload) +
              " pixels, file holds " + std::to_string(bytes.size() - 16));
  img.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(payload));
  return img;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  require(bytes.size() >= 4, ErrorCode::truncated, "'" + path.string() + "': missing header");
  check_magic(big_endian(bytes, 0), idx_labels_magic, path);
  require(bytes.size() >= 8, ErrorCode::truncated, "'" + path.string() + "': short header");
  const std::size_t count = big_endian(bytes, 4);
  require(bytes.size() >= 8 + count, ErrorCode::truncated,
          "'" + path.string() + "': header declares " + std::to_string(count) + " labels");
  return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
  require(images.pixels.size() == std::size_t{images.count} * images.rows * images.cols,
          ErrorCode::dimension_mismatch, "write_idx_images: pixel count does not match header");
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  put_big_endian(out, idx_images_magic);
  put_big_endian(out, images.count);
  put_big_endian(out, images.rows);
  put_big_endian(out, images.cols);
  out.write(reinterpret_cast<const char*>(images.pixels.data()),
            static_cast<std::streamsize>(images.pixels.size()));
  require(static_cast<bool>(out), ErrorCode::io, "failed writing '" + path.string() + "'");
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  put_big_endian(out, idx_labels_magic);
  put_big_endian(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
  require(static_cast<bool>(out), ErrorCode::io, "failed writing '" + path.string() + "'");
}

MnistFiles mnist_files(const std::filesystem::path& dir, const std::string& part) {
  return {dir / (part + "-images-idx3-ubyte"), dir / (part + "-labels-idx1-ubyte")};
}

Dataset load_mnist(const MnistFiles& files, std::optional<Index> limit) {
  const IdxImages img = read_idx_images(files.images);
  const auto labels = read_idx_labels(files.labels);
  require(img.rows == 28 && img.cols == 28, ErrorCode::dimension_mismatch,
          "'" + files.images.string() + "': images are " + std::to_string(img.rows) + "x" +
              std::to_string(img.cols) + ", expected 28x28");
  require(labels.size() == img.count, ErrorCode::dimension_mismatch,
          "image count " + std::to_string(img.count) + " does not match label count " +
              std::to_string(labels.size()));

  const Index pixels = 28 * 28;
  Index n = static_cast<Index>(img.count);
  if (limit) n = std::min(n, *limit);

  Dataset ds;
  ds.samples.resize(n, pixels);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < pixels; ++j) {
      ds.samples(i, j) = img.pixels[static_cast<std::size_t>(i * pixels + j)] / 255.0;
    }
  }
  ds.labels.assign(labels.begin(), labels.begin() + n);
  ds.split.train.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) ds.split.train[static_cast<std::size_t>(i)] = i;
  ds.meta.name = "mnist";
  ds.meta.normalization = Normalization{RowVector::Zero(pixels), RowVector::Constant(pixels, 255.0)};
  return ds;
}

}  // namespace isoflow::data
