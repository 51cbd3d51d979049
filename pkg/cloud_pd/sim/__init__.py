"""Asynchronous discrete-event simulator."""
