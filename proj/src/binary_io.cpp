#include "ecalab/binary_io.hpp"

#include <filesystem>
#include <fstream>

namespace ecalab::io {

void atomic_write(const std::string& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::invalid_input, "cannot write " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(ErrorKind::invalid_input, "short write to " + tmp);
    }
    fs::rename(tmp, target);
}

}  // namespace ecalab::io
