"""Утилиты мешера"""
