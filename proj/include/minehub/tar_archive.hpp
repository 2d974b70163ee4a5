#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace minehub {

/// Writes `source_dir` (recursively, entries prefixed with `root_name/`) as a
/// gzip-compressed POSIX ustar archive. Paths that do not fit the ustar
/// name/prefix fields get a pax extended header. Entries are sorted and
/// timestamps zeroed, so equal trees give equal archives.
void write_tar_gz(const std::filesystem::path &source_dir, const std::string &root_name,
                  const std::filesystem::path &archive);

/// Extracts an archive written by write_tar_gz (or any ustar/pax/GNU tar with
/// regular files, directories and symlinks) below `dest`.
void extract_tar_gz(const std::filesystem::path &archive, const std::filesystem::path &dest);

/// Entry paths in archive order.
std::vector<std::string> list_tar_gz(const std::filesystem::path &archive);

} // namespace minehub
