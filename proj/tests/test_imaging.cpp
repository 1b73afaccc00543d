#include <doctest.h>

#include "refdepth/imaging.hpp"
