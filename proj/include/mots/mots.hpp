#pragma once

#include <mots/assignment.hpp>
#include <mots/association.hpp>
#include <mots/config_file.hpp>
#include <mots/errors.hpp>
#include <mots/fixture.hpp>
#include <mots/io.hpp>
#include <mots/losses.hpp>
#include <mots/mask.hpp>
#include <mots/metrics.hpp>
#include <mots/sequence.hpp>
#include <mots/tracker.hpp>
#include <mots/tuner.hpp>
