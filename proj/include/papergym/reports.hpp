#pragma once

#include <string>
#include <vector>

#include <papergym/util.hpp>

namespace papergym {

// Aligned-text table with a CSV twin; every report is emitted in both forms.
class TextTable {
public:
    explicit TextTable(std::vector<std::string> headers) : headers_(std::move(headers)) {}

    void add_row(std::vector<std::string> cells) {
        if (cells.size() != headers_.size())
            throw Error("table row has " + std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(headers_.size()));
        rows_.push_back(std::move(cells));
    }

    void add_footer(std::string note) { footers_.push_back(std::move(note)); }

    std::string render() const {
        std::vector<size_t> widths(headers_.size());
        for (size_t c = 0; c < headers_.size(); ++c) widths[c] = headers_[c].size();
        for (const auto& row : rows_)
            for (size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());

        auto line = [&](const std::vector<std::string>& cells) {
            std::string out;
            for (size_t c = 0; c < cells.size(); ++c) {
                out += cells[c];
                if (c + 1 < cells.size()) out.append(widths[c] - cells[c].size() + 2, ' ');
            }
            return out + "\n";
        };
        std::string out = line(headers_);
        std::string rule;
        for (size_t c = 0; c < widths.size(); ++c)
            rule += std::string(widths[c], '-') + (c + 1 < widths.size() ? "  " : "");
        out += rule + "\n";
        for (const auto& row : rows_) out += line(row);
        for (const auto& f : footers_) out += f + "\n";
        return out;
    }

    std::string csv() const {
        auto escape = [](const std::string& cell) {
            if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
            std::string out = "\"";
            for (char ch : cell) {
                if (ch == '"') out += "\"\"";
                else out.push_back(ch);
            }
            return out + "\"";
        };
        std::string out;
        for (size_t c = 0; c < headers_.size(); ++c)
            out += escape(headers_[c]) + (c + 1 < headers_.size() ? "," : "\n");
        for (const auto& row : rows_)
            for (size_t c = 0; c < row.size(); ++c)
                out += escape(row[c]) + (c + 1 < row.size() ? "," : "\n");
        return out;
    }

private:
    std::vector<std::string> headers_;
    std::vector<std::vector<std::string>> rows_;
    std::vector<std::string> footers_;
};

}  // namespace papergym
