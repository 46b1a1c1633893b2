from .messages import (
    DECLARED_LEN,
    MessageKind,
    ProtocolMessage,
    association_bits,
    build_message,
    frame_bits,
    handshake_bits,
    unframe_bits,
)
from .crypto import derive_pmk, derive_ptk
from .session import HandshakeSession, Role, State, cc_step, run_exchange, sta_step, tamper
from .schedule import ScheduleConfig, ScheduleWindow, Scheduler, WindowKind, schedule_slots
