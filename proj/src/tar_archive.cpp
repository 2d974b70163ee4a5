#include "minehub/tar_archive.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <memory>

#include "minehub/error.hpp"

namespace minehub {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t block = 512;

struct GzCloser {
  void operator()(gzFile f) const { gzclose(f); }
};
using GzHandle = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

struct Header {
  std::array<char, block> raw{};

  void put(std::size_t offset, std::size_t width, const std::string &value) {
    std::memcpy(raw.data() + offset, value.data(), std::min(width, value.size()));
  }
  void put_octal(std::size_t offset, std::size_t width, unsigned long long value) {
    std::string digits(width - 1, '0');
    for (std::size_t i = width - 1; i-- > 0 && value > 0;) {
      digits[i] = static_cast<char>('0' + (value & 7));
      value >>= 3;
    }
    put(offset, width, digits);
  }
  void finish() {
    std::memset(raw.data() + 148, ' ', 8);
    unsigned long sum = 0;
    for (unsigned char c : raw) {
      sum += c;
    }
    std::string digits(6, '0');
    for (std::size_t i = 6; i-- > 0 && sum > 0;) {
      digits[i] = static_cast<char>('0' + (sum & 7));
      sum >>= 3;
    }
    put(148, 6, digits);
    raw[154] = '\0';
    raw[155] = ' ';
  }
};

Header make_header(const std::string &name, const std::string &prefix, char type,
                   unsigned mode, unsigned long long size, const std::string &link = {}) {
  Header h;
  h.put(0, 100, name);
  h.put_octal(100, 8, mode);
  h.put_octal(108, 8, 0);
  h.put_octal(116, 8, 0);
  h.put_octal(124, 12, size);
  h.put_octal(136, 12, 0);
  h.raw[156] = type;
  h.put(157, 100, link);
  h.put(257, 6, std::string("ustar\0", 6));
  h.put(263, 2, "00");
  h.put(345, 155, prefix);
  h.finish();
  return h;
}

// Splits into ustar (prefix, name); false if the path cannot be represented.
bool split_ustar(const std::string &path, std::string &prefix, std::string &name) {
  if (path.size() <= 100) {
    prefix.clear();
    name = path;
    return true;
  }
  for (std::size_t slash = path.find('/'); slash != std::string::npos;
       slash = path.find('/', slash + 1)) {
    if (slash <= 155 && path.size() - slash - 1 <= 100 && path.size() - slash - 1 > 0) {
      prefix = path.substr(0, slash);
      name = path.substr(slash + 1);
      return true;
    }
  }
  return false;
}

class TarWriter {
public:
  explicit TarWriter(const fs::path &archive) : file_(gzopen(archive.c_str(), "wb9")) {
    if (!file_) {
      throw Error(ErrorCode::io, "cannot create archive " + archive.string());
    }
  }

  void add(const std::string &path, char type, unsigned mode, const std::string &data,
           const std::string &link = {}) {
    std::string prefix;
    std::string name;
    if (!split_ustar(path, prefix, name) || link.size() > 100) {
      std::string records = pax_record("path", path);
      if (link.size() > 100) {
        records += pax_record("linkpath", link);
      }
      write_header(make_header("PaxHeader", "", 'x', 0644, records.size()));
      write_data(records);
      name = path.substr(0, 100);
      prefix.clear();
    }
    write_header(make_header(name, prefix, type, mode, data.size(), link.substr(0, 100)));
    write_data(data);
  }

  void close() {
    const std::array<char, block * 2> zeros{};
    write_raw(zeros.data(), zeros.size());
    if (gzclose(file_.release()) != Z_OK) {
      throw Error(ErrorCode::io, "archive write failed");
    }
  }

private:
  static std::string pax_record(const std::string &key, const std::string &value) {
    const std::string body = " " + key + "=" + value + "\n";
    std::size_t len = body.size() + 1;
    while (std::to_string(len).size() + body.size() != len) {
      ++len;
    }
    return std::to_string(len) + body;
  }

  void write_header(const Header &h) { write_raw(h.raw.data(), h.raw.size()); }

  void write_data(const std::string &data) {
    write_raw(data.data(), data.size());
    const std::size_t pad = (block - data.size() % block) % block;
    const std::array<char, block> zeros{};
    write_raw(zeros.data(), pad);
  }

  void write_raw(const char *data, std::size_t n) {
    if (n == 0) {
      return;
    }
    if (gzwrite(file_.get(), data, static_cast<unsigned>(n)) != static_cast<int>(n)) {
      throw Error(ErrorCode::io, "archive write failed (disk full?)");
    }
  }

  GzHandle file_;
};

std::string read_file(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

unsigned long long parse_octal(const char *field, std::size_t width) {
  unsigned long long v = 0;
  for (std::size_t i = 0; i < width && field[i] != '\0' && field[i] != ' '; ++i) {
    if (field[i] < '0' || field[i] > '7') {
      break;
    }
    v = (v << 3) | static_cast<unsigned>(field[i] - '0');
  }
  return v;
}

std::string cstr(const char *field, std::size_t width) {
  return std::string(field, strnlen(field, width));
}

struct Entry {
  std::string path;
  char type = '0';
  unsigned mode = 0644;
  std::string link;
  std::string data;
};

template <typename Fn> void read_entries(const fs::path &archive, Fn &&on_entry) {
  GzHandle file(gzopen(archive.c_str(), "rb"));
  if (!file) {
    throw Error(ErrorCode::io, "cannot open archive " + archive.string());
  }
  auto read_exact = [&](char *dst, std::size_t n) {
    std::size_t got = 0;
    while (got < n) {
      const int r = gzread(file.get(), dst + got, static_cast<unsigned>(n - got));
      if (r <= 0) {
        return false;
      }
      got += static_cast<std::size_t>(r);
    }
    return true;
  };
  auto read_payload = [&](unsigned long long size) {
    std::string data(size, '\0');
    if (!read_exact(data.data(), size)) {
      throw Error(ErrorCode::io, "truncated archive " + archive.string());
    }
    std::array<char, block> pad{};
    read_exact(pad.data(), (block - size % block) % block);
    return data;
  };

  std::string pending_path;
  std::string pending_link;
  std::array<char, block> raw{};
  while (read_exact(raw.data(), block)) {
    if (std::all_of(raw.begin(), raw.end(), [](char c) { return c == 0; })) {
      break;
    }
    const char type = raw[156] == '\0' ? '0' : raw[156];
    const auto size = parse_octal(raw.data() + 124, 12);
    if (type == 'x' || type == 'L' || type == 'K' || type == 'g') {
      std::string payload = read_payload(size);
      if (type == 'L') {
        pending_path = cstr(payload.data(), payload.size());
      } else if (type == 'K') {
        pending_link = cstr(payload.data(), payload.size());
      } else if (type == 'x') {
        std::size_t pos = 0;
        while (pos < payload.size()) {
          const auto sp = payload.find(' ', pos);
          if (sp == std::string::npos) {
            break;
          }
          const auto len = std::stoull(payload.substr(pos, sp - pos));
          const std::string rec = payload.substr(sp + 1, len - (sp - pos) - 2);
          const auto eq = rec.find('=');
          if (eq != std::string::npos) {
            if (rec.substr(0, eq) == "path") {
              pending_path = rec.substr(eq + 1);
            } else if (rec.substr(0, eq) == "linkpath") {
              pending_link = rec.substr(eq + 1);
            }
          }
          pos += len;
        }
      }
      continue;
    }
    Entry e;
    e.type = type;
    e.mode = static_cast<unsigned>(parse_octal(raw.data() + 100, 8));
    const std::string prefix = cstr(raw.data() + 345, 155);
    const std::string name = cstr(raw.data(), 100);
    e.path = !pending_path.empty() ? pending_path : prefix.empty() ? name : prefix + "/" + name;
    e.link = !pending_link.empty() ? pending_link : cstr(raw.data() + 157, 100);
    pending_path.clear();
    pending_link.clear();
    e.data = type == '0' || type == '7' ? read_payload(size) : (read_payload(size), std::string());
    on_entry(e);
  }
}

bool safe_relative(const std::string &path) {
  const fs::path p(path);
  if (p.is_absolute()) {
    return false;
  }
  return std::none_of(p.begin(), p.end(), [](const fs::path &part) { return part == ".."; });
}

} // namespace

void write_tar_gz(const fs::path &source_dir, const std::string &root_name, const fs::path &archive) {
  if (!fs::is_directory(source_dir)) {
    throw Error(ErrorCode::missing_clone, "cannot archive missing directory " + source_dir.string());
  }
  std::vector<fs::path> entries;
  for (const auto &e : fs::recursive_directory_iterator(source_dir)) {
    entries.push_back(e.path());
  }
  std::sort(entries.begin(), entries.end());
  TarWriter writer(archive);
  writer.add(root_name + "/", '5', 0755, {});
  for (const auto &p : entries) {
    const std::string rel = root_name + "/" + fs::relative(p, source_dir).generic_string();
    const auto status = fs::symlink_status(p);
    if (fs::is_symlink(status)) {
      writer.add(rel, '2', 0777, {}, fs::read_symlink(p).generic_string());
    } else if (fs::is_directory(status)) {
      writer.add(rel + "/", '5', 0755, {});
    } else if (fs::is_regular_file(status)) {
      const auto perms = fs::status(p).permissions();
      const bool exec = (perms & fs::perms::owner_exec) != fs::perms::none;
      writer.add(rel, '0', exec ? 0755 : 0644, read_file(p));
    }
  }
  writer.close();
}

void extract_tar_gz(const fs::path &archive, const fs::path &dest) {
  fs::create_directories(dest);
  read_entries(archive, [&](const Entry &e) {
    if (!safe_relative(e.path)) {
      throw Error(ErrorCode::io, "refusing unsafe archive path " + e.path);
    }
    const fs::path target = dest / e.path;
    switch (e.type) {
    case '5':
      fs::create_directories(target);
      break;
    case '2':
      fs::create_directories(target.parent_path());
      fs::create_symlink(e.link, target);
      break;
    case '0':
    case '7': {
      fs::create_directories(target.parent_path());
      std::ofstream out(target, std::ios::binary | std::ios::trunc);
      out.write(e.data.data(), static_cast<std::streamsize>(e.data.size()));
      if (!out) {
        throw Error(ErrorCode::io, "cannot write " + target.string());
      }
      out.close();
      if ((e.mode & 0100) != 0) {
        fs::permissions(target, fs::perms::owner_exec, fs::perm_options::add);
      }
      break;
    }
    default:
      break;
    }
  });
}

std::vector<std::string> list_tar_gz(const fs::path &archive) {
  std::vector<std::string> paths;
  read_entries(archive, [&](const Entry &e) { paths.push_back(e.path); });
  return paths;
}

} // namespace minehub
