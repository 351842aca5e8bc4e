#include "tentacle/csv.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace tentacle::csv
{
    namespace
    {
        std::vector<std::string> split (const std::string &line)
        {
            std::vector<std::string> out;
            std::string cell;
            std::istringstream ss (line);
            while (std::getline (ss, cell, ','))
                out.push_back (cell);
            if (!line.empty () && line.back () == ',')
                out.emplace_back ();
            return out;
        }

        std::string join (const std::vector<std::string> &v)
        {
            std::string s;
            for (std::size_t i = 0; i < v.size (); ++i)
                s += (i ? "," : "") + v[i];
            return s;
        }
    } // namespace

    std::string format (double v)
    {
        char buf[64];
        const auto res = std::to_chars (buf, buf + sizeof buf, v);
        if (res.ec != std::errc ())
            throw std::runtime_error ("cannot format number");
        return {buf, res.ptr};
    }

    Writer::Writer (std::ostream &os, const std::vector<std::string> &header) : os_ (os), columns_ (header.size ())
    {
        os_ << join (header) << '\n';
    }

    void Writer::sep ()
    {
        if (col_ >= columns_)
            throw std::logic_error ("too many CSV columns in row");
        if (col_ > 0)
            os_ << ',';
        ++col_;
    }

    Writer &Writer::operator<< (double v)
    {
        sep ();
        os_ << format (v);
        return *this;
    }

    Writer &Writer::operator<< (long long v)
    {
        sep ();
        os_ << v;
        return *this;
    }

    Writer &Writer::operator<< (const std::string &v)
    {
        sep ();
        os_ << v;
        return *this;
    }

    void Writer::end_row ()
    {
        if (col_ != columns_)
            throw std::logic_error ("CSV row has " + std::to_string (col_) + " of " + std::to_string (columns_) +
                                    " columns");
        os_ << '\n';
        col_ = 0;
    }

    std::size_t Table::column (const std::string &name) const
    {
        for (std::size_t i = 0; i < header.size (); ++i)
            if (header[i] == name)
                return i;
        throw std::runtime_error ("CSV column '" + name + "' not found");
    }

    std::vector<double> Table::values (const std::string &name) const
    {
        const auto c = column (name);
        std::vector<double> out;
        out.reserve (rows.size ());
        for (const auto &r : rows)
            out.push_back (r[c]);
        return out;
    }

    Table read (std::istream &is, const std::vector<std::string> &expected)
    {
        Table t;
        std::string line;
        if (!std::getline (is, line))
            throw std::runtime_error ("CSV input is empty");
        if (!line.empty () && line.back () == '\r')
            line.pop_back ();
        t.header = split (line);
        if (!expected.empty () && t.header != expected)
            throw std::runtime_error ("unexpected CSV header '" + line + "', expected '" + join (expected) + "'");
        std::size_t lineno = 1;
        while (std::getline (is, line))
        {
            ++lineno;
            if (!line.empty () && line.back () == '\r')
                line.pop_back ();
            if (line.empty ())
                continue;
            const auto cells = split (line);
            if (cells.size () != t.header.size ())
                throw std::runtime_error ("CSV line " + std::to_string (lineno) + " has " +
                                          std::to_string (cells.size ()) + " fields, expected " +
                                          std::to_string (t.header.size ()));
            std::vector<double> row (cells.size ());
            for (std::size_t i = 0; i < cells.size (); ++i)
            {
                const char *b = cells[i].data ();
                const char *e = b + cells[i].size ();
                const auto res = std::from_chars (b, e, row[i]);
                if (res.ec != std::errc () || res.ptr != e)
                    throw std::runtime_error ("CSV line " + std::to_string (lineno) + ": '" + cells[i] +
                                              "' is not a number");
            }
            t.rows.push_back (std::move (row));
        }
        return t;
    }

} // namespace tentacle::csv
