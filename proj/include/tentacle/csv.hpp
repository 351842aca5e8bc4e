#pragma once
/**
 * @file   csv.hpp
 * @brief  Minimal fixed-header CSV reading and writing.
 *
 * Numbers are written in shortest round-trip form so that files are
 * byte-identical across runs and parse back to the same doubles.
 */

#include <iosfwd>
#include <string>
#include <vector>

namespace tentacle::csv
{
    /// Shortest decimal string that parses back to the same double.
    [[nodiscard]] std::string format (double v);

    class Writer
    {
    public:
        Writer (std::ostream &os, const std::vector<std::string> &header);

        Writer &operator<< (double v);
        Writer &operator<< (long long v);
        Writer &operator<< (const std::string &v);
        /// Ends the current row; throws std::logic_error on a column count mismatch.
        void end_row ();

    private:
        void sep ();

        std::ostream &os_;
        std::size_t columns_;
        std::size_t col_ = 0;
    };

    struct Table
    {
        std::vector<std::string> header;
        std::vector<std::vector<double>> rows;

        /// Index of a named column; throws std::runtime_error when absent.
        [[nodiscard]] std::size_t column (const std::string &name) const;
        [[nodiscard]] std::vector<double> values (const std::string &name) const;
    };

    /// Reads a numeric table. When `expected` is non-empty the header must match it.
    [[nodiscard]] Table read (std::istream &is, const std::vector<std::string> &expected = {});

} // namespace tentacle::csv
