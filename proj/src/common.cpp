#include <llmqo/common.hpp>

#include <fstream>
#include <sstream>


namespace llmqo {

std::string read_file(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (not in)
        throw Error("cannot open file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string &path, std::string_view contents)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (not out)
        throw Error("cannot write file '" + path + "'");
    out.write(contents.data(), std::streamsize(contents.size()));
    if (not out)
        throw Error("failed writing file '" + path + "'");
}

std::string_view trim(std::string_view s)
{
    const auto is_space = [](char c) { return c == ' ' or c == '\t' or c == '\n' or c == '\r'; };
    while (not s.empty() and is_space(s.front())) s.remove_prefix(1);
    while (not s.empty() and is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.emplace_back(s.substr(start));
            return parts;
        }
        parts.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

}
