/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#include "xrguide/blob_store.hpp"

#include "xrguide/digest.hpp"
#include "xrguide/error.hpp"

#include <fstream>
#include <sstream>

namespace xrguide
{

std::string read_file(const std::filesystem::path & path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open for reading", path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::filesystem::path & path, std::string_view bytes)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error(ErrorCode::Io, "cannot open for writing", tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out)
            throw Error(ErrorCode::Io, "write failed", tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string MemoryBlobStore::put(std::string_view bytes)
{
    auto digest = sha256_hex(bytes);
    std::lock_guard lock(mutex_);
    blobs_.try_emplace(digest, bytes);
    return digest;
}

std::optional<std::string> MemoryBlobStore::get(std::string_view digest) const
{
    std::lock_guard lock(mutex_);
    auto it = blobs_.find(digest);
    if (it == blobs_.end())
        return std::nullopt;
    return it->second;
}

bool MemoryBlobStore::contains(std::string_view digest) const
{
    std::lock_guard lock(mutex_);
    return blobs_.find(digest) != blobs_.end();
}

std::size_t MemoryBlobStore::size() const
{
    std::lock_guard lock(mutex_);
    return blobs_.size();
}

DirectoryBlobStore::DirectoryBlobStore(std::filesystem::path dir) : dir_(std::move(dir))
{
    std::filesystem::create_directories(dir_);
}

std::string DirectoryBlobStore::put(std::string_view bytes)
{
    auto digest = sha256_hex(bytes);
    std::lock_guard lock(mutex_);
    const auto path = dir_ / digest;
    if (!std::filesystem::exists(path))
        write_file(path, bytes);
    return digest;
}

std::optional<std::string> DirectoryBlobStore::get(std::string_view digest) const
{
    if (!looks_like_digest(digest))
        return std::nullopt;
    std::lock_guard lock(mutex_);
    const auto path = dir_ / std::string(digest);
    if (!std::filesystem::exists(path))
        return std::nullopt;
    return read_file(path);
}

bool DirectoryBlobStore::contains(std::string_view digest) const
{
    if (!looks_like_digest(digest))
        return false;
    std::lock_guard lock(mutex_);
    return std::filesystem::exists(dir_ / std::string(digest));
}

} // namespace xrguide
