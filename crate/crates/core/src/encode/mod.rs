//! Raw tables to numeric feature vectors: cohort filters, one-hot encoding
//! and location enrichment.

mod encoder;
mod filter;
pub mod geo;
mod table;

pub use encoder::{
    encode_record, encode_record_fields, encode_table, fit_encoder, parse_duration, parse_event, ColumnEncoding, ColumnSpec,
    EncodedTable, EncoderMap, EncoderSpec, FieldError, GeoSource, SkippedRow, GEO_FEATURES,
};
pub use filter::{apply_filters, FilterRule, FilterRuleSet, Predicate};
pub use geo::{
    normalize_address, AddressBackend, CachedAddressResolver, FixedResolver, GeoChain, GeoError, GeoQuery,
    GeoResolver, GeoTriple, HttpGeocoder, NoGeo, StaticFipsTable,
};
pub use table::{RawFields, RawRecord, RawTable};
