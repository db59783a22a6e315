// Copyright 2026 The hsmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace hsmtl {

// Base of every error the library throws. Each subclass maps to one failure
// category so callers (the CLI in particular) can pick an exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define HSMTL_DEFINE_ERROR(Name)             \
    class Name : public Error {              \
    public:                                  \
        using Error::Error;                  \
    }

HSMTL_DEFINE_ERROR(DimensionError);
HSMTL_DEFINE_ERROR(LabelError);
HSMTL_DEFINE_ERROR(IndexError);
HSMTL_DEFINE_ERROR(ParameterError);
HSMTL_DEFINE_ERROR(StateError);
HSMTL_DEFINE_ERROR(ConfigError);
HSMTL_DEFINE_ERROR(IngestionError);
HSMTL_DEFINE_ERROR(SchemaError);
HSMTL_DEFINE_ERROR(IoError);
HSMTL_DEFINE_ERROR(SplitError);
HSMTL_DEFINE_ERROR(RegistryError);
HSMTL_DEFINE_ERROR(DataError);
HSMTL_DEFINE_ERROR(CorruptCheckpoint);
HSMTL_DEFINE_ERROR(EvaluationError);

#undef HSMTL_DEFINE_ERROR

}  // namespace hsmtl
