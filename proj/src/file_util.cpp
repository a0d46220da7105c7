#include "fragvqa/file_util.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "fragvqa/error.hpp"

namespace fragvqa {

namespace {

std::atomic<std::uint64_t> g_temp_counter{0};

std::filesystem::path temp_sibling(const std::filesystem::path& path) {
  std::ostringstream name;
  name << path.filename().string() << ".tmp."
       << std::hash<std::thread::id>{}(std::this_thread::get_id()) << "."
       << g_temp_counter.fetch_add(1);
  return path.parent_path() / name.str();
}

void write_atomic_impl(const std::filesystem::path& path, const char* data,
                       std::size_t size) {
  const auto tmp = temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + tmp.string());
    out.write(data, static_cast<std::streamsize>(size));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error("cannot rename into place: " + path.string());
  }
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0) {
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!in) throw Error("read failed: " + path.string());
  }
  return bytes;
}

std::string read_file_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes) {
  write_atomic_impl(path, reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_atomic_impl(path, text.data(), text.size());
}

std::filesystem::path with_suffix(const std::filesystem::path& path,
                                  std::string_view suffix) {
  auto out = path;
  out += std::string(suffix);
  return out;
}

}  // namespace fragvqa
