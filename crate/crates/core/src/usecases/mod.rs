//! Network functions built on the program sandbox, with their daemons:
//! passive delay measurement ([`dm`]), hybrid-access aggregation ([`wrr`],
//! [`hybrid`]) and ECMP discovery ([`oamp`], [`traceroute`]).

pub mod dm;
pub mod hybrid;
pub mod oamp;
pub mod tlvs;
pub mod traceroute;
pub mod wrr;
