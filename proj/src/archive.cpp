#include <spdlog/spdlog.h>

#include "minehub/error.hpp"
#include "minehub/model.hpp"
#include "minehub/tar_archive.hpp"
#include "minehub/vcs_harvester.hpp"

namespace minehub {

namespace fs = std::filesystem;

fs::path archive_repository(Store &store, std::string_view vcs_system_id) {
  const auto vcs = store.get(col::vcs_system, vcs_system_id);
  if (!vcs) {
    throw Error(ErrorCode::not_found, "unknown vcs system " + std::string(vcs_system_id));
  }
  const fs::path clone = clone_path_of(*vcs);
  std::error_code ec;
  if (!fs::is_directory(clone, ec)) {
    throw Error(ErrorCode::missing_clone, "clone missing: " + clone.string());
  }
  if (store.datadir().empty()) {
    throw Error(ErrorCode::invalid_argument, "archiving needs an on-disk data directory");
  }
  const fs::path archives = store.datadir() / "archives";
  fs::create_directories(archives);
  const std::string name(vcs_system_id);
  const fs::path staging = archives / (name + ".staging");
  fs::remove_all(staging);
  const auto r = run_process({"git", "clone", "--mirror", "--quiet", "--no-local", clone.string(),
                              (staging / "repo.git").string()},
                             {{}, {}, {"GIT_TERMINAL_PROMPT=0"}});
  if (r.exit_code != 0) {
    fs::remove_all(staging);
    throw Error(ErrorCode::git, "cannot mirror " + clone.string() + ": " + r.err);
  }
  // Drop the per-clone remote pointing back at the local path.
  run_process({"git", "remote", "remove", "origin"}, {staging / "repo.git", {}, {}});

  const fs::path target = archives / (name + ".tar.gz");
  const fs::path tmp = archives / (name + ".tar.gz.tmp");
  try {
    write_tar_gz(staging / "repo.git", name + ".git", tmp);
  } catch (...) {
    fs::remove_all(staging);
    fs::remove(tmp, ec);
    throw;
  }
  fs::rename(tmp, target);
  fs::remove_all(staging);

  store.modify(col::vcs_system, vcs_system_id, [&](Document &d) {
    d["archive_ref"] = target.string();
    return true;
  });
  spdlog::info("archived {} to {}", clone.string(), target.string());
  return target;
}

} // namespace minehub
