#ifndef ELLIP_ELLIP_HPP
#define ELLIP_ELLIP_HPP

#include "ellip/errors.hpp"
#include "ellip/random.hpp"
#include "ellip/families.hpp"
#include "ellip/linalg.hpp"
#include "ellip/model.hpp"
#include "ellip/likelihood.hpp"
#include "ellip/fit.hpp"
#include "ellip/ancillary.hpp"
#include "ellip/distributions.hpp"
#include "ellip/inference.hpp"
#include "ellip/montecarlo.hpp"
#include "ellip/io.hpp"
#include "ellip/config.hpp"

#endif
