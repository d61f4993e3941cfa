#pragma once

#include <stdexcept>
#include <string>

namespace plumeseg {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define PLUMESEG_ERROR(Name)                       \
    struct Name : Error {                          \
        using Error::Error;                        \
    }

PLUMESEG_ERROR(FormatError);
PLUMESEG_ERROR(DataError);
PLUMESEG_ERROR(IoError);
PLUMESEG_ERROR(ChannelError);
PLUMESEG_ERROR(BoundsError);
PLUMESEG_ERROR(CrsError);
PLUMESEG_ERROR(ShapeError);
PLUMESEG_ERROR(NumericsError);
PLUMESEG_ERROR(StatsError);
PLUMESEG_ERROR(EmptyError);
PLUMESEG_ERROR(ConfigError);
PLUMESEG_ERROR(NoWithinVariationError);
PLUMESEG_ERROR(DofError);
PLUMESEG_ERROR(SingularError);

#undef PLUMESEG_ERROR

}  // namespace plumeseg
