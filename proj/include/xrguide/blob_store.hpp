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

#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

namespace xrguide
{

/// Content-addressed byte store; the key is the lowercase hex sha256 of the bytes.
class BlobStore
{
public:
    virtual ~BlobStore() = default;
    /// Stores the bytes (idempotent) and returns their digest.
    virtual std::string put(std::string_view bytes) = 0;
    virtual std::optional<std::string> get(std::string_view digest) const = 0;
    virtual bool contains(std::string_view digest) const = 0;
};

class MemoryBlobStore final : public BlobStore
{
public:
    std::string put(std::string_view bytes) override;
    std::optional<std::string> get(std::string_view digest) const override;
    bool contains(std::string_view digest) const override;
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::string, std::less<>> blobs_;
};

/// One file per blob, named by digest. Writes go through a temporary file and a rename.
class DirectoryBlobStore final : public BlobStore
{
public:
    explicit DirectoryBlobStore(std::filesystem::path dir);
    std::string put(std::string_view bytes) override;
    std::optional<std::string> get(std::string_view digest) const override;
    bool contains(std::string_view digest) const override;
    const std::filesystem::path & dir() const noexcept { return dir_; }

private:
    std::filesystem::path dir_;
    mutable std::mutex mutex_;
};

std::string read_file(const std::filesystem::path & path);
void write_file(const std::filesystem::path & path, std::string_view bytes);

} // namespace xrguide
